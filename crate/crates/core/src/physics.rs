//! Heat source, governing-equation residuals and boundary fluxes.
//!
//! All quantities are in the g-mm-s-degC system. Power carries units of
//! g*mm^2/s^3 so that flux densities come out in g/s^3 (W/mm^3 scaled by 1e9).

use crate::config::{DomainSpec, GoldakParams, MaterialProps, RadiationConvention, ResidualScales, STEFAN_BOLTZMANN};
use crate::error::{Error, Result};
use crate::mlp::TemperatureJet;
use crate::real::Real;

const SQRT3: f64 = 1.732_050_807_568_877_2;

/// Faces of the plate, in the order used throughout the crate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Face {
    XMin,
    XMax,
    YMin,
    YMax,
    /// Bottom, clamped to ambient.
    ZMin,
    /// Top, where the arc sits.
    ZMax,
}

impl Face {
    pub const ALL: [Face; 6] = [Face::XMin, Face::XMax, Face::YMin, Face::YMax, Face::ZMin, Face::ZMax];

    pub fn axis(self) -> usize {
        match self {
            Face::XMin | Face::XMax => 0,
            Face::YMin | Face::YMax => 1,
            Face::ZMin | Face::ZMax => 2,
        }
    }

    /// Sign of the outward normal along [`Face::axis`].
    pub fn outward(self) -> f64 {
        match self {
            Face::XMin | Face::YMin | Face::ZMin => -1.0,
            Face::XMax | Face::YMax | Face::ZMax => 1.0,
        }
    }

    pub fn is_upper(self) -> bool {
        self.outward() > 0.0
    }

    pub fn index(self) -> usize {
        Face::ALL.iter().position(|&f| f == self).expect("face listed")
    }

    pub fn name(self) -> &'static str {
        match self {
            Face::XMin => "x-",
            Face::XMax => "x+",
            Face::YMin => "y-",
            Face::YMax => "y+",
            Face::ZMin => "z-",
            Face::ZMax => "z+",
        }
    }

    /// Area of this face for a plate of the given size.
    pub fn area(self, domain: &DomainSpec) -> f64 {
        match self.axis() {
            0 => domain.ly * domain.lz,
            1 => domain.lx * domain.lz,
            _ => domain.lx * domain.ly,
        }
    }
}

/// Precomputed double-ellipsoid source.
#[derive(Debug, Clone, Copy)]
pub struct GoldakSource {
    params: GoldakParams,
    lz: f64,
    t_on: f64,
    peak_front: f64,
    peak_rear: f64,
}

impl GoldakSource {
    pub fn new(params: &GoldakParams, domain: &DomainSpec) -> Self {
        let base = 6.0 * SQRT3 * params.efficiency * params.power
            / (params.b * params.c * std::f64::consts::PI * std::f64::consts::PI.sqrt());
        let t_on = if params.t_on.is_nan() { domain.t_end } else { params.t_on };
        Self {
            params: *params,
            lz: domain.lz,
            t_on,
            peak_front: base * params.f_f / params.a_f,
            peak_rear: base * params.f_r / params.a_r,
        }
    }

    pub fn params(&self) -> &GoldakParams {
        &self.params
    }

    /// Volumetric heat input at a physical point `(x, y, z, t)`.
    pub fn flux(&self, p: [f64; 4]) -> f64 {
        let g = &self.params;
        if p[3] > self.t_on {
            return 0.0;
        }
        let xi = p[0] - g.center_x(p[3]);
        let (peak, a) = if xi <= 0.0 { (self.peak_front, g.a_f) } else { (self.peak_rear, g.a_r) };
        let dy = p[1] - g.y0;
        let dz = p[2] - self.lz;
        peak * (-3.0 * (xi * xi / (a * a) + dy * dy / (g.b * g.b) + dz * dz / (g.c * g.c))).exp()
    }

    /// Peak density of the front lobe.
    pub fn peak(&self) -> f64 {
        self.peak_front.max(self.peak_rear)
    }

    /// Power deposited in the box `lo..hi` at time `t`, from erf products.
    pub fn energy_in_box(&self, lo: [f64; 3], hi: [f64; 3], t: f64) -> f64 {
        let g = &self.params;
        if t > self.t_on {
            return 0.0;
        }
        let xc = g.center_x(t);
        let seg = |lo: f64, hi: f64, width: f64| -> f64 {
            if hi <= lo {
                return 0.0;
            }
            let k = SQRT3 / width;
            width * std::f64::consts::PI.sqrt() / (2.0 * SQRT3) * (libm::erf(k * hi) - libm::erf(k * lo))
        };
        let front = seg(lo[0] - xc, hi[0].min(xc) - xc, g.a_f);
        let rear = seg(lo[0].max(xc) - xc, hi[0] - xc, g.a_r);
        let y = seg(lo[1] - g.y0, hi[1] - g.y0, g.b);
        let z = seg(lo[2] - self.lz, hi[2] - self.lz, g.c);
        (self.peak_front * front + self.peak_rear * rear) * y * z
    }

    /// Power deposited inside the plate at time `t`.
    pub fn energy_in_plate(&self, domain: &DomainSpec, t: f64) -> f64 {
        self.energy_in_box([0.0; 3], [domain.lx, domain.ly, domain.lz], t)
    }

    /// Power deposited in the lower half-space `z <= lz` (unbounded in x, y).
    pub fn energy_half_space(&self) -> f64 {
        let inf = f64::INFINITY;
        self.energy_in_box([-inf, -inf, -inf], [inf, inf, self.lz], 0.0)
    }

    /// Midpoint-rule quadrature of the flux over the plate with `n` cells per
    /// axis.
    pub fn quadrature_in_plate(&self, domain: &DomainSpec, t: f64, n: [usize; 3]) -> f64 {
        let h = [domain.lx / n[0] as f64, domain.ly / n[1] as f64, domain.lz / n[2] as f64];
        let mut total = 0.0;
        for i in 0..n[0] {
            let x = (i as f64 + 0.5) * h[0];
            let mut plane = 0.0;
            for j in 0..n[1] {
                let y = (j as f64 + 0.5) * h[1];
                for k in 0..n[2] {
                    let z = (k as f64 + 0.5) * h[2];
                    plane += self.flux([x, y, z, t]);
                }
            }
            total += plane;
        }
        total * h[0] * h[1] * h[2]
    }
}

/// Convenience wrapper around [`GoldakSource::flux`].
pub fn goldak_flux(p: [f64; 4], params: &GoldakParams, domain: &DomainSpec) -> f64 {
    GoldakSource::new(params, domain).flux(p)
}

/// Material and scaling constants in the working scalar type.
#[derive(Debug, Clone, Copy)]
pub struct PhysicsConstants<S> {
    pub rho_cp: S,
    pub k: S,
    pub h: S,
    /// `sigma * emissivity`.
    pub sigma_eps: S,
    pub t_ambient: S,
    /// Added to temperatures before the fourth power.
    pub offset: S,
    pub scales: ResidualScales,
}

impl<S: Real> PhysicsConstants<S> {
    pub fn new(mat: &MaterialProps, radiation: RadiationConvention, scales: ResidualScales) -> Self {
        Self {
            rho_cp: S::lit(mat.heat_capacity()),
            k: S::lit(mat.k),
            h: S::lit(mat.h_conv),
            sigma_eps: S::lit(STEFAN_BOLTZMANN * mat.emissivity),
            t_ambient: S::lit(mat.t_ambient),
            offset: S::lit(radiation.offset()),
            scales,
        }
    }

    pub fn conv_flux(&self, t: S) -> S {
        conv_flux(t, self.t_ambient, self.h)
    }

    pub fn rad_flux(&self, t: S) -> S {
        rad_flux(t, self.t_ambient, self.sigma_eps, self.offset)
    }

    /// `d(q_conv + q_rad)/dT`.
    pub fn loss_slope(&self, t: S) -> S {
        let th = t + self.offset;
        self.h + S::lit(4.0) * self.sigma_eps * th * th * th
    }

    /// Scaled heat-equation residual `rho cp T_t - k lap T - Q`.
    pub fn pde_residual(&self, jet: &TemperatureJet<S>, q: S) -> S {
        pde_residual(jet, q, self.rho_cp, self.k) * S::lit(self.scales.pde)
    }

    /// Scaled Robin residual on `face`.
    pub fn robin_residual(&self, jet: &TemperatureJet<S>, face: Face) -> Result<S> {
        Ok(robin_residual(jet, face, self)? * S::lit(self.scales.robin))
    }

    pub fn dirichlet_residual(&self, t: S) -> S {
        dirichlet_residual(t, self.t_ambient) * S::lit(self.scales.dirichlet)
    }
}

/// Unscaled `rho cp T_t - k (T_xx + T_yy + T_zz) - Q`.
pub fn pde_residual<S: Real>(jet: &TemperatureJet<S>, q: S, rho_cp: S, k: S) -> S {
    rho_cp * jet.grad[3] - k * jet.laplacian() - q
}

/// Newton cooling `h (T - T0)`.
pub fn conv_flux<S: Real>(t: S, t_ambient: S, h: S) -> S {
    h * (t - t_ambient)
}

/// Grey-body radiation `sigma eps ((T + off)^4 - (T0 + off)^4)`.
pub fn rad_flux<S: Real>(t: S, t_ambient: S, sigma_eps: S, offset: S) -> S {
    sigma_eps * ((t + offset).powi(4) - (t_ambient + offset).powi(4))
}

/// Unscaled `-k dT/dn - q_conv - q_rad` with `n` the outward normal.
pub fn robin_residual<S: Real>(jet: &TemperatureJet<S>, face: Face, c: &PhysicsConstants<S>) -> Result<S> {
    if face == Face::ZMin {
        return Err(Error::BottomFaceRobin);
    }
    let dtdn = jet.grad[face.axis()] * S::lit(face.outward());
    Ok(-c.k * dtdn - c.conv_flux(jet.value) - c.rad_flux(jet.value))
}

/// Unscaled `T - T0`.
pub fn dirichlet_residual<S: Real>(t: S, t_ambient: S) -> S {
    t - t_ambient
}
