//! Implicit finite-difference reference solver and the analytic solutions
//! used to check it.
//!
//! Each lattice node owns the control volume of half-spacing around it, so
//! boundary nodes carry half (edge: quarter, corner: eighth) volumes and the
//! Robin faces are closed by the node's share of the face area. Time stepping
//! is backward Euler. The radiative part of the Robin condition is written as
//! `h_r(T) (T - T0)` with the secant coefficient
//! `h_r = h + sigma eps (theta^2 + theta0^2)(theta + theta0)` lagged one
//! Picard sweep. Every sweep solves a symmetric positive-definite system with
//! Jacobi-preconditioned conjugate gradients.

use rayon::prelude::*;

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::grid::{GridSpec, TemperatureGrid};
use crate::physics::{Face, GoldakSource};

/// Boundary treatment of one plate face.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FaceCondition {
    /// Convection plus radiation to ambient.
    Robin,
    /// Zero flux.
    Insulated,
    /// Held at a fixed temperature.
    Dirichlet(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub enum InitialField {
    /// Uniform at `t_ambient`.
    Ambient,
    Uniform(f64),
    /// One value per node in storage order.
    Nodes(Vec<f64>),
}

#[derive(Debug, Clone)]
pub struct OracleOptions {
    /// Indexed like [`Face::ALL`].
    pub faces: [FaceCondition; 6],
    pub initial: InitialField,
    /// Times to store; each must be a multiple of the time step.
    pub output_times: Vec<f64>,
    pub picard_tol: f64,
    pub picard_max_sweeps: usize,
    pub cg_tol: f64,
}

impl OracleOptions {
    /// Robin on the top and side faces, bottom clamped at ambient.
    pub fn standard(cfg: &RunConfig, output_times: Vec<f64>) -> Self {
        let mut faces = [FaceCondition::Robin; 6];
        faces[Face::ZMin.index()] = FaceCondition::Dirichlet(cfg.material.t_ambient);
        Self {
            faces,
            initial: InitialField::Ambient,
            output_times,
            picard_tol: 1e-6,
            picard_max_sweeps: 20,
            cg_tol: 1e-10,
        }
    }

    /// Every face insulated.
    pub fn insulated(output_times: Vec<f64>) -> Self {
        Self {
            faces: [FaceCondition::Insulated; 6],
            initial: InitialField::Ambient,
            output_times,
            picard_tol: 1e-6,
            picard_max_sweeps: 20,
            cg_tol: 1e-10,
        }
    }
}

/// Per-step diagnostics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRecord {
    pub step: usize,
    pub time: f64,
    pub picard_sweeps: usize,
    pub cg_iterations: usize,
    /// `rho cp sum V (T^{n+1} - T^n)` over all nodes.
    pub stored_energy: f64,
    /// `dt sum V q(t^{n+1})` with `q` sampled at the control-volume centroids.
    pub deposited_energy: f64,
}

#[derive(Debug, Clone)]
pub struct OracleRun {
    pub grid: TemperatureGrid,
    pub steps: Vec<StepRecord>,
}

/// Output times every `interval` seconds from `interval` up to `t_end`.
pub fn slice_times(t_end: f64, interval: f64) -> Vec<f64> {
    let n = (t_end / interval + 1e-9).floor() as usize;
    (1..=n).map(|i| i as f64 * interval).collect()
}

/// Solve the standard problem (Robin sides and top, clamped bottom, ambient
/// start) and store the requested slices.
pub fn fdm_solve(cfg: &RunConfig, grid: &GridSpec, output_times: &[f64]) -> Result<TemperatureGrid> {
    let opts = OracleOptions::standard(cfg, output_times.to_vec());
    Ok(fdm_solve_with(cfg, grid, &opts)?.grid)
}

struct Operator {
    dims: [usize; 3],
    /// Conductance to the +axis neighbour, per axis and node (0 at the last node).
    g: [Vec<f64>; 3],
    /// Heat capacity over dt, per node.
    m: Vec<f64>,
    /// Robin face area per node.
    area: Vec<f64>,
    fixed: Vec<Option<f64>>,
}

impl Operator {
    fn plane(&self) -> usize {
        self.dims[0] * self.dims[1]
    }

    fn stride(&self, axis: usize) -> usize {
        [1, self.dims[0], self.plane()][axis]
    }

    fn coord(&self, n: usize) -> [usize; 3] {
        let [nx, ny, _] = self.dims;
        [n % nx, (n / nx) % ny, n / (nx * ny)]
    }

    /// Sum of conductances and the Jacobi diagonal, given `h_r` per node.
    fn diagonal(&self, hr: &[f64]) -> Vec<f64> {
        (0..self.m.len())
            .map(|n| {
                if self.fixed[n].is_some() {
                    return 1.0;
                }
                let c = self.coord(n);
                let mut d = self.m[n] + self.area[n] * hr[n];
                for a in 0..3 {
                    d += self.g[a][n];
                    if c[a] > 0 {
                        d += self.g[a][n - self.stride(a)];
                    }
                }
                d
            })
            .collect()
    }

    /// `y = A x` on free nodes, identity on fixed nodes. Fixed entries of `x`
    /// are assumed zero.
    fn apply(&self, diag: &[f64], x: &[f64], y: &mut [f64]) {
        let plane = self.plane();
        y.par_chunks_mut(plane).enumerate().for_each(|(k, out)| {
            for (local, yv) in out.iter_mut().enumerate() {
                let n = k * plane + local;
                if self.fixed[n].is_some() {
                    *yv = x[n];
                    continue;
                }
                let c = self.coord(n);
                let mut v = diag[n] * x[n];
                for a in 0..3 {
                    let s = self.stride(a);
                    if c[a] + 1 < self.dims[a] {
                        v -= self.g[a][n] * x[n + s];
                    }
                    if c[a] > 0 {
                        v -= self.g[a][n - s] * x[n - s];
                    }
                }
                *yv = v;
            }
        });
    }
}

/// Slab-wise dot product with a fixed reduction order.
fn dot(a: &[f64], b: &[f64], plane: usize) -> f64 {
    let partial: Vec<f64> = a
        .par_chunks(plane)
        .zip(b.par_chunks(plane))
        .map(|(x, y)| x.iter().zip(y).map(|(p, q)| p * q).sum::<f64>())
        .collect();
    partial.iter().sum()
}

/// Preconditioned CG; returns the iteration count or the final relative residual.
fn conjugate_gradients(
    op: &Operator,
    diag: &[f64],
    b: &[f64],
    x: &mut [f64],
    tol: f64,
) -> std::result::Result<usize, f64> {
    let n = b.len();
    let plane = op.plane();
    let bnorm = dot(b, b, plane).sqrt();
    if bnorm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return Ok(0);
    }
    let mut r = vec![0.0; n];
    op.apply(diag, x, &mut r);
    r.par_iter_mut().zip(b).for_each(|(r, b)| *r = b - *r);
    let mut z: Vec<f64> = r.iter().zip(diag).map(|(r, d)| r / d).collect();
    let mut p = z.clone();
    let mut ap = vec![0.0; n];
    let mut rz = dot(&r, &z, plane);
    let max_iter = 20 * n + 100;
    for iter in 0..max_iter {
        let rnorm = dot(&r, &r, plane).sqrt();
        if rnorm <= tol * bnorm {
            return Ok(iter);
        }
        op.apply(diag, &p, &mut ap);
        let alpha = rz / dot(&p, &ap, plane);
        x.par_iter_mut().zip(&p).for_each(|(x, p)| *x += alpha * p);
        r.par_iter_mut().zip(&ap).for_each(|(r, q)| *r -= alpha * q);
        z.par_iter_mut().zip(r.par_iter().zip(diag)).for_each(|(z, (r, d))| *z = r / d);
        let rz_new = dot(&r, &z, plane);
        let beta = rz_new / rz;
        rz = rz_new;
        p.par_iter_mut().zip(&z).for_each(|(p, z)| *p = z + beta * *p);
    }
    Err(dot(&r, &r, plane).sqrt() / bnorm)
}

fn check_output_times(times: &[f64], grid: &GridSpec) -> Result<Vec<usize>> {
    times
        .iter()
        .map(|&t| {
            let s = (t / grid.dt).round();
            if !(t >= 0.0) || (t / grid.dt - s).abs() > 1e-6 || s as usize > grid.steps() {
                Err(Error::invariant("output time", t, format!("a multiple of dt = {} within [0, t_end]", grid.dt)))
            } else {
                Ok(s as usize)
            }
        })
        .collect()
}

/// Run the solver with explicit boundary conditions and initial field.
pub fn fdm_solve_with(cfg: &RunConfig, grid: &GridSpec, opts: &OracleOptions) -> Result<OracleRun> {
    let out_steps = check_output_times(&opts.output_times, grid)?;
    let dims = grid.dims();
    let [nx, ny, nz] = dims;
    let count = grid.node_count();
    let h = grid.spacing;
    let dt = grid.dt;
    let mat = &cfg.material;
    let t0 = mat.t_ambient;
    let rho_cp = mat.heat_capacity();
    let sigma_eps = crate::config::STEFAN_BOLTZMANN * mat.emissivity;
    let offset = cfg.physics.radiation.offset();
    let source = GoldakSource::new(&cfg.goldak, &cfg.domain);

    let weight = |i: usize, n: usize| if i == 0 || i + 1 == n { 0.5 } else { 1.0 };
    let shift = |i: usize, n: usize| {
        if n == 1 {
            0.0
        } else if i == 0 {
            h / 4.0
        } else if i + 1 == n {
            -h / 4.0
        } else {
            0.0
        }
    };

    let mut volume = vec![0.0; count];
    let mut centroid = vec![[0.0; 3]; count];
    let mut g = [vec![0.0; count], vec![0.0; count], vec![0.0; count]];
    let mut area = vec![0.0; count];
    let mut fixed = vec![None; count];
    for k in 0..nz {
        for j in 0..ny {
            for i in 0..nx {
                let n = grid.index(i, j, k);
                let idx = [i, j, k];
                let w = [weight(i, nx), weight(j, ny), weight(k, nz)];
                volume[n] = w[0] * w[1] * w[2] * h * h * h;
                let p = grid.node(i, j, k);
                centroid[n] = [p[0] + shift(i, nx), p[1] + shift(j, ny), p[2] + shift(k, nz)];
                for a in 0..3 {
                    if idx[a] + 1 < dims[a] {
                        g[a][n] = mat.k * h * w[(a + 1) % 3] * w[(a + 2) % 3];
                    }
                }
                for face in Face::ALL {
                    let a = face.axis();
                    let on = if face.is_upper() { idx[a] + 1 == dims[a] } else { idx[a] == 0 };
                    if !on {
                        continue;
                    }
                    match opts.faces[face.index()] {
                        FaceCondition::Robin => area[n] += w[(a + 1) % 3] * w[(a + 2) % 3] * h * h,
                        FaceCondition::Insulated => {}
                        FaceCondition::Dirichlet(v) => fixed[n] = Some(v),
                    }
                }
            }
        }
    }
    let op = Operator {
        dims,
        g,
        m: volume.iter().map(|v| rho_cp * v / dt).collect(),
        area,
        fixed,
    };

    let mut temp = match &opts.initial {
        InitialField::Ambient => vec![t0; count],
        InitialField::Uniform(v) => vec![*v; count],
        InitialField::Nodes(v) => {
            if v.len() != count {
                return Err(Error::LatticeMismatch(format!("initial field has {} values, lattice {count}", v.len())));
            }
            v.clone()
        }
    };
    for (t, f) in temp.iter_mut().zip(&op.fixed) {
        if let Some(v) = f {
            *t = *v;
        }
    }

    let radiative = sigma_eps != 0.0 && op.area.iter().any(|&a| a > 0.0);
    let secant = |t: f64| {
        let (th, th0) = (t + offset, t0 + offset);
        mat.h_conv + sigma_eps * (th * th + th0 * th0) * (th + th0)
    };

    let mut times = Vec::new();
    let mut slices = Vec::new();
    let mut store = |step: usize, field: &[f64]| {
        for (o, &s) in out_steps.iter().enumerate() {
            if s == step {
                times.push(opts.output_times[o]);
                slices.push(field.to_vec());
            }
        }
    };
    store(0, &temp);

    let mut records = Vec::with_capacity(grid.steps());
    let plane = nx * ny;
    for step in 1..=grid.steps() {
        let time = step as f64 * dt;
        let q: Vec<f64> = centroid
            .par_iter()
            .zip(&volume)
            .map(|(c, v)| source.flux([c[0], c[1], c[2], time]) * v)
            .collect();
        let mut iterate = temp.clone();
        let mut sweeps = 0;
        let mut cg_iterations = 0;
        loop {
            sweeps += 1;
            let hr: Vec<f64> = iterate.iter().map(|&t| secant(t)).collect();
            let diag = op.diagonal(&hr);
            let mut rhs = vec![0.0; count];
            for n in 0..count {
                if op.fixed[n].is_some() {
                    continue;
                }
                let mut b = op.m[n] * temp[n] + q[n] + op.area[n] * hr[n] * t0;
                let c = op.coord(n);
                for a in 0..3 {
                    let s = op.stride(a);
                    if c[a] + 1 < dims[a] {
                        if let Some(v) = op.fixed[n + s] {
                            b += op.g[a][n] * v;
                        }
                    }
                    if c[a] > 0 {
                        if let Some(v) = op.fixed[n - s] {
                            b += op.g[a][n - s] * v;
                        }
                    }
                }
                rhs[n] = b;
            }
            let mut x: Vec<f64> = iterate
                .iter()
                .zip(&op.fixed)
                .map(|(&t, f)| if f.is_some() { 0.0 } else { t })
                .collect();
            cg_iterations += conjugate_gradients(&op, &diag, &rhs, &mut x, opts.cg_tol)
                .map_err(|residual| Error::LinearSolve { step, residual })?;
            for (v, f) in x.iter_mut().zip(&op.fixed) {
                if let Some(t) = f {
                    *v = *t;
                }
            }
            let change: f64 = x
                .par_chunks(plane)
                .zip(iterate.par_chunks(plane))
                .map(|(a, b)| a.iter().zip(b).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max))
                .collect::<Vec<_>>()
                .into_iter()
                .fold(0.0, f64::max);
            iterate = x;
            if !radiative || change < opts.picard_tol {
                break;
            }
            if sweeps >= opts.picard_max_sweeps {
                return Err(Error::PicardDivergence { step, change });
            }
        }
        let stored = rho_cp * iterate.iter().zip(&temp).zip(&volume).map(|((a, b), v)| (a - b) * v).sum::<f64>();
        records.push(StepRecord {
            step,
            time,
            picard_sweeps: sweeps,
            cg_iterations,
            stored_energy: stored,
            deposited_energy: dt * q.iter().sum::<f64>(),
        });
        temp = iterate;
        store(step, &temp);
    }
    let grid = TemperatureGrid::new(*grid, times, slices)?;
    Ok(OracleRun { grid, steps: records })
}

/// Temperature in a slab `0 <= x <= len` whose ends are held at `t_boundary`
/// from a uniform start `t_init`.
pub fn analytic_slab_1d(x: f64, t: f64, len: f64, t_init: f64, t_boundary: f64, alpha: f64) -> f64 {
    if x <= 0.0 || x >= len {
        return t_boundary;
    }
    let amp = t_init - t_boundary;
    if t <= 0.0 {
        return t_init;
    }
    let pi = std::f64::consts::PI;
    let decay = alpha * t * (pi / len).powi(2);
    let mut sum = 0.0;
    let mut n = 1u64;
    loop {
        let nf = n as f64;
        let coef = 4.0 / (nf * pi) * (-nf * nf * decay).exp();
        if coef < 1e-12 || n > 10_000_001 {
            break;
        }
        sum += coef * (nf * pi * x / len).sin();
        n += 2;
    }
    t_boundary + amp * sum
}

/// Quasi-steady moving point source on the surface of a semi-infinite body.
/// The source sits at `(x0 + v t, y0, lz)`.
pub fn rosenthal_field(p: [f64; 4], cfg: &RunConfig) -> Result<f64> {
    const CUTOFF: f64 = 0.5;
    let g = &cfg.goldak;
    let mat = &cfg.material;
    let xi = p[0] - g.center_x(p[3]);
    let dy = p[1] - g.y0;
    let dz = p[2] - cfg.domain.lz;
    let r = (xi * xi + dy * dy + dz * dz).sqrt();
    if r < CUTOFF {
        return Err(Error::RosenthalCutoff(r));
    }
    let alpha = mat.diffusivity();
    let q = g.efficiency * g.power;
    Ok(mat.t_ambient + q / (2.0 * std::f64::consts::PI * mat.k * r) * (-g.velocity * (r + xi) / (2.0 * alpha)).exp())
}
