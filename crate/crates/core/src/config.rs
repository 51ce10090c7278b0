//! Physical and run parameters.
//!
//! Units are g, mm, s and degrees Celsius throughout; nothing is converted
//! to SI internally. Power is therefore in g*mm^2/s^3 (1 W = 1e9).
//!
//! The on-disk format is TOML restricted to one level of `[section]` tables
//! holding `key = value` pairs; see `docs/config.md` for every key.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Stefan-Boltzmann constant in g/(s^3 K^4) (CODATA 2018, converted from
/// 5.670374419e-8 W/(m^2 K^4)).
pub const STEFAN_BOLTZMANN: f64 = 5.670_374_419e-5;

/// Offset added to Celsius temperatures under the Kelvin radiation convention.
pub const KELVIN_OFFSET: f64 = 273.15;

/// Environment variable that overrides `[run] seed`.
pub const SEED_ENV: &str = "ARCPINN_SEED";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MaterialProps {
    /// Density, g/mm^3.
    pub rho: f64,
    /// Specific heat, mm^2/(s^2 degC).
    pub cp: f64,
    /// Thermal conductivity, g*mm/(s^3 degC).
    pub k: f64,
    pub emissivity: f64,
    /// Convection coefficient, g/(s^3 degC).
    pub h_conv: f64,
    /// Ambient and initial temperature, degC.
    pub t_ambient: f64,
}

impl Default for MaterialProps {
    fn default() -> Self {
        Self {
            rho: 7.85e-3,
            cp: 6.2e8,
            k: 4.5e7,
            emissivity: 0.2,
            h_conv: 2e4,
            t_ambient: 25.0,
        }
    }
}

impl MaterialProps {
    /// Thermal diffusivity `k / (rho * cp)` in mm^2/s.
    pub fn diffusivity(&self) -> f64 {
        self.k / (self.rho * self.cp)
    }

    /// Volumetric heat capacity `rho * cp`.
    pub fn heat_capacity(&self) -> f64 {
        self.rho * self.cp
    }

    pub fn validate(&self) -> Result<()> {
        positive("material.rho", self.rho)?;
        positive("material.cp", self.cp)?;
        positive("material.k", self.k)?;
        if !(0.0..=1.0).contains(&self.emissivity) {
            return Err(Error::invariant(
                "material.emissivity",
                self.emissivity,
                "0 <= emissivity <= 1",
            ));
        }
        if !(self.h_conv >= 0.0) || !self.h_conv.is_finite() {
            return Err(Error::invariant("material.h_conv", self.h_conv, "h_conv >= 0"));
        }
        finite("material.t_ambient", self.t_ambient)
    }
}

/// Diffusivity and the Stefan-Boltzmann constant in simulator units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DerivedConstants {
    pub diffusivity: f64,
    pub stefan_boltzmann: f64,
}

pub fn derived_constants(mat: &MaterialProps) -> DerivedConstants {
    DerivedConstants {
        diffusivity: mat.diffusivity(),
        stefan_boltzmann: STEFAN_BOLTZMANN,
    }
}

/// Double-ellipsoid source geometry, power and path.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GoldakParams {
    pub a_f: f64,
    pub a_r: f64,
    pub b: f64,
    pub c: f64,
    pub f_f: f64,
    pub f_r: f64,
    /// Arc power, g*mm^2/s^3.
    pub power: f64,
    pub efficiency: f64,
    pub x0: f64,
    pub y0: f64,
    /// Travel speed along +x, mm/s.
    pub velocity: f64,
    /// Time the source stays on, s. Defaults to the simulated duration.
    #[serde(skip_serializing_if = "is_unset")]
    pub t_on: f64,
}

fn is_unset(v: &f64) -> bool {
    v.is_nan()
}

impl Default for GoldakParams {
    fn default() -> Self {
        Self {
            a_f: 2.57,
            a_r: 6.0,
            b: 6.0,
            c: 4.0,
            f_f: 0.6,
            f_r: 1.4,
            power: 2.45e12,
            efficiency: 0.9,
            x0: 0.0,
            y0: 3.0,
            velocity: 10.0,
            t_on: f64::NAN,
        }
    }
}

impl GoldakParams {
    /// Relative mismatch of the two lobes' peak densities at the split plane.
    pub fn continuity_gap(&self) -> f64 {
        let front = self.f_f / self.a_f;
        let rear = self.f_r / self.a_r;
        (front - rear).abs() / front
    }

    /// Source centre x-coordinate at time `t`.
    pub fn center_x(&self, t: f64) -> f64 {
        self.x0 + self.velocity * t
    }

    pub fn validate(&self) -> Result<()> {
        positive("goldak.a_f", self.a_f)?;
        positive("goldak.a_r", self.a_r)?;
        positive("goldak.b", self.b)?;
        positive("goldak.c", self.c)?;
        if !(self.f_f >= 0.0) || !(self.f_r >= 0.0) || (self.f_f + self.f_r - 2.0).abs() > 1e-9 {
            return Err(Error::invariant(
                "goldak.f_f",
                format!("f_f = {}, f_r = {}", self.f_f, self.f_r),
                "f_f + f_r = 2 within 1e-9",
            ));
        }
        if !(self.efficiency > 0.0 && self.efficiency <= 1.0) {
            return Err(Error::invariant(
                "goldak.efficiency",
                self.efficiency,
                "0 < efficiency <= 1",
            ));
        }
        if !(self.power >= 0.0) || !self.power.is_finite() {
            return Err(Error::invariant("goldak.power", self.power, "power >= 0"));
        }
        let gap = self.continuity_gap();
        if !(gap < 1e-2) {
            return Err(Error::invariant(
                "goldak.f_f",
                format!("continuity gap {gap:.3e}"),
                "|f_f/a_f - f_r/a_r| / (f_f/a_f) < 1e-2",
            ));
        }
        finite("goldak.x0", self.x0)?;
        finite("goldak.y0", self.y0)?;
        finite("goldak.velocity", self.velocity)?;
        if !(self.t_on >= 0.0) {
            return Err(Error::invariant("goldak.t_on", self.t_on, "t_on >= 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DomainSpec {
    pub lx: f64,
    pub ly: f64,
    pub lz: f64,
    pub t_end: f64,
}

impl Default for DomainSpec {
    fn default() -> Self {
        Self {
            lx: 40.0,
            ly: 6.0,
            lz: 4.0,
            t_end: 3.0,
        }
    }
}

impl DomainSpec {
    pub fn extents(&self) -> [f64; 4] {
        [self.lx, self.ly, self.lz, self.t_end]
    }

    pub fn validate(&self) -> Result<()> {
        positive("domain.lx", self.lx)?;
        positive("domain.ly", self.ly)?;
        positive("domain.lz", self.lz)?;
        positive("domain.t_end", self.t_end)
    }

    pub fn contains(&self, p: [f64; 4], tol: f64) -> bool {
        p.iter()
            .zip(self.extents())
            .all(|(&v, l)| v >= -tol * l && v <= l * (1.0 + tol))
    }
}

/// Affine map of a physical `(x, y, z, t)` into `[-1, 1]^4`.
pub fn normalize_point(p: [f64; 4], domain: &DomainSpec) -> Result<[f64; 4]> {
    if !domain.contains(p, 1e-9) {
        return Err(Error::OutOfDomain { point: p });
    }
    Ok(normalize_unchecked(p, domain))
}

/// Same as [`normalize_point`] without the range check; used for probes that
/// sit on the boundary up to round-off.
pub fn normalize_unchecked(p: [f64; 4], domain: &DomainSpec) -> [f64; 4] {
    let ext = domain.extents();
    std::array::from_fn(|i| 2.0 * p[i] / ext[i] - 1.0)
}

pub fn denormalize_point(n: [f64; 4], domain: &DomainSpec) -> [f64; 4] {
    let ext = domain.extents();
    std::array::from_fn(|i| (n[i] + 1.0) * 0.5 * ext[i])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplingSpec {
    pub n_boundary: usize,
    /// Domain (PDE) points, source-following points included.
    pub n_domain: usize,
    pub n_initial: usize,
    /// Source-following points, a subset of `n_domain`.
    pub n_source: usize,
    /// Time step of the collocation time lattice, s.
    pub dt: f64,
    /// Power-law exponent `p` of the z-warp `z = lz * u^(1/p)`.
    pub z_warp: f64,
    /// Scale of the Goldak ellipsoid that bounds source-following points.
    pub source_scale: f64,
    /// Leading Sobol indices dropped from every stream.
    pub skip: u64,
}

impl Default for SamplingSpec {
    fn default() -> Self {
        Self {
            n_boundary: 185_669,
            n_domain: 112_635,
            n_initial: 3_509,
            n_source: 64 * 600,
            dt: 0.005,
            z_warp: 2.0,
            source_scale: 2.0,
            skip: 1,
        }
    }
}

impl SamplingSpec {
    /// Every count multiplied by `fraction` and rounded to nearest.
    pub fn scaled(&self, fraction: f64) -> Self {
        let s = |n: usize| (n as f64 * fraction).round() as usize;
        Self {
            n_boundary: s(self.n_boundary),
            n_domain: s(self.n_domain),
            n_initial: s(self.n_initial),
            n_source: s(self.n_source),
            ..*self
        }
    }

    pub fn total(&self) -> usize {
        self.n_boundary + self.n_domain + self.n_initial
    }

    /// Number of time levels `t_end / dt`.
    pub fn steps(&self, domain: &DomainSpec) -> usize {
        (domain.t_end / self.dt).round() as usize
    }

    pub fn validate(&self, domain: &DomainSpec) -> Result<()> {
        positive("sampling.dt", self.dt)?;
        let steps = domain.t_end / self.dt;
        if (steps - steps.round()).abs() > 1e-9 * steps.max(1.0) || steps.round() < 1.0 {
            return Err(Error::invariant(
                "sampling.dt",
                self.dt,
                format!("a divisor of t_end = {}", domain.t_end),
            ));
        }
        if self.n_boundary == 0 {
            return Err(Error::invariant("sampling.n_boundary", 0, "n_boundary > 0"));
        }
        if self.n_source >= self.n_domain {
            return Err(Error::invariant(
                "sampling.n_source",
                self.n_source,
                format!("n_source < n_domain = {}", self.n_domain),
            ));
        }
        positive("sampling.z_warp", self.z_warp)?;
        positive("sampling.source_scale", self.source_scale)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkSpec {
    /// Number of hidden layers.
    pub depth: usize,
    pub width: usize,
    /// Temperature scale of the softplus output head, degC.
    pub delta_t: f64,
    /// Gain of the scaled-normal weight initialisation.
    pub init_gain: f64,
}

impl Default for NetworkSpec {
    fn default() -> Self {
        Self {
            depth: 4,
            width: 64,
            delta_t: 2000.0,
            init_gain: 1.48,
        }
    }
}

impl NetworkSpec {
    /// Layer sizes from input to output.
    pub fn topology(&self) -> Vec<usize> {
        let mut t = vec![4];
        t.extend(std::iter::repeat_n(self.width, self.depth));
        t.push(1);
        t
    }

    pub fn validate(&self) -> Result<()> {
        if self.depth == 0 {
            return Err(Error::invariant("network.depth", 0, "depth >= 1"));
        }
        if self.width == 0 {
            return Err(Error::invariant("network.width", 0, "width >= 1"));
        }
        positive("network.delta_t", self.delta_t)?;
        positive("network.init_gain", self.init_gain)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingSpec {
    pub adam_lr: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub adam_epochs: usize,
    pub lbfgs_lr: f64,
    pub lbfgs_max_iter: usize,
    pub lbfgs_max_eval: usize,
    pub lbfgs_history: usize,
    pub lbfgs_epochs: usize,
    pub wolfe_c1: f64,
    pub wolfe_c2: f64,
    /// L-BFGS stops an epoch once `max |grad|` falls below this.
    pub tolerance_grad: f64,
    /// L-BFGS stops an epoch once step or loss change falls below this.
    pub tolerance_change: f64,
    /// Balance of the adaptive-weight moving average.
    pub weight_alpha: f64,
    /// Adaptive weights are refreshed every this many Adam epochs.
    pub weight_period: usize,
    /// Points per work unit of the parallel loss evaluation.
    pub chunk_size: usize,
}

impl Default for TrainingSpec {
    fn default() -> Self {
        Self {
            adam_lr: 1e-3,
            adam_beta1: 0.9,
            adam_beta2: 0.99,
            adam_eps: 1e-8,
            adam_epochs: 14_850,
            lbfgs_lr: 0.01,
            lbfgs_max_iter: 50,
            lbfgs_max_eval: 62,
            lbfgs_history: 50,
            lbfgs_epochs: 150,
            wolfe_c1: 1e-4,
            wolfe_c2: 0.9,
            tolerance_grad: 1e-7,
            tolerance_change: 1e-9,
            weight_alpha: 0.9,
            weight_period: 1000,
            chunk_size: 256,
        }
    }
}

impl TrainingSpec {
    pub fn validate(&self) -> Result<()> {
        positive("training.adam_lr", self.adam_lr)?;
        unit_interval("training.adam_beta1", self.adam_beta1)?;
        unit_interval("training.adam_beta2", self.adam_beta2)?;
        positive("training.adam_eps", self.adam_eps)?;
        positive("training.lbfgs_lr", self.lbfgs_lr)?;
        at_least_one("training.lbfgs_max_iter", self.lbfgs_max_iter)?;
        at_least_one("training.lbfgs_max_eval", self.lbfgs_max_eval)?;
        at_least_one("training.lbfgs_history", self.lbfgs_history)?;
        if !(0.0 < self.wolfe_c1 && self.wolfe_c1 < self.wolfe_c2 && self.wolfe_c2 < 1.0) {
            return Err(Error::invariant(
                "training.wolfe_c1",
                format!("c1 = {}, c2 = {}", self.wolfe_c1, self.wolfe_c2),
                "0 < c1 < c2 < 1",
            ));
        }
        unit_interval("training.weight_alpha", self.weight_alpha)?;
        at_least_one("training.weight_period", self.weight_period)?;
        at_least_one("training.chunk_size", self.chunk_size)
    }
}

/// How temperatures enter the T^4 radiation law.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RadiationConvention {
    /// Celsius values shifted by 273.15 K before raising to the fourth power.
    #[default]
    KelvinShifted,
    /// Celsius values used as-is.
    CelsiusRaw,
}

impl RadiationConvention {
    pub fn offset(self) -> f64 {
        match self {
            RadiationConvention::KelvinShifted => KELVIN_OFFSET,
            RadiationConvention::CelsiusRaw => 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhysicsSpec {
    pub radiation: RadiationConvention,
    /// When true and no explicit scale is given, the PDE residual is divided
    /// by `rho * cp` (degC/s) and the Robin residual by `k` (degC/mm).
    pub residual_scaling: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pde_scale: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bc_scale: Option<f64>,
    pub dirichlet_scale: f64,
}

impl Default for PhysicsSpec {
    fn default() -> Self {
        Self {
            radiation: RadiationConvention::KelvinShifted,
            residual_scaling: true,
            pde_scale: None,
            bc_scale: None,
            dirichlet_scale: 1.0,
        }
    }
}

/// Multipliers applied to each residual family before squaring.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResidualScales {
    pub pde: f64,
    pub robin: f64,
    pub dirichlet: f64,
}

impl ResidualScales {
    pub const UNIT: ResidualScales = ResidualScales {
        pde: 1.0,
        robin: 1.0,
        dirichlet: 1.0,
    };

    pub fn times(self, factor: f64) -> Self {
        Self {
            pde: self.pde * factor,
            robin: self.robin * factor,
            dirichlet: self.dirichlet * factor,
        }
    }
}

impl PhysicsSpec {
    pub fn scales(&self, mat: &MaterialProps) -> ResidualScales {
        let (pde, robin) = if self.residual_scaling {
            // dividing by h_conv instead weights the normal gradient by
            // k / h = 2250 mm and stalls training
            (1.0 / mat.heat_capacity(), 1.0 / mat.k)
        } else {
            (1.0, 1.0)
        };
        ResidualScales {
            pde: self.pde_scale.unwrap_or(pde),
            robin: self.bc_scale.unwrap_or(robin),
            dirichlet: self.dirichlet_scale,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(s) = self.pde_scale {
            positive("physics.pde_scale", s)?;
        }
        if let Some(s) = self.bc_scale {
            positive("physics.bc_scale", s)?;
        }
        positive("physics.dirichlet_scale", self.dirichlet_scale)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSpec {
    /// Seed of the network initialisation.
    pub seed: u64,
}

/// Probe locations for history tables, in mm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProbeSpec {
    pub points: Vec<[f64; 3]>,
}

impl Default for ProbeSpec {
    /// Five points on the top surface along the deposition line.
    fn default() -> Self {
        Self {
            points: [8.0, 14.0, 20.0, 26.0, 32.0].iter().map(|&x| [x, 3.0, 4.0]).collect(),
        }
    }
}

impl ProbeSpec {
    pub fn validate(&self, domain: &DomainSpec) -> Result<()> {
        for p in &self.points {
            if !domain.contains([p[0], p[1], p[2], 0.0], 1e-9) {
                return Err(Error::invariant("probes.points", format!("{p:?}"), "inside the plate"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub run: RunSpec,
    pub material: MaterialProps,
    pub goldak: GoldakParams,
    pub domain: DomainSpec,
    pub sampling: SamplingSpec,
    pub network: NetworkSpec,
    pub training: TrainingSpec,
    pub physics: PhysicsSpec,
    pub probes: ProbeSpec,
}

impl RunConfig {
    /// The default bead-on-plate setup with `t_on` resolved.
    pub fn standard() -> Self {
        let mut cfg = Self::default();
        cfg.resolve();
        cfg
    }

    /// The compact run used by the acceptance test: standard physics, a tenth of
    /// the collocation points and a 3000 + 30 epoch schedule.
    pub fn desk_scale() -> Self {
        let mut cfg = Self::standard();
        cfg.sampling = cfg.sampling.scaled(0.1);
        cfg.training.adam_epochs = 3000;
        cfg.training.lbfgs_epochs = 30;
        cfg
    }

    fn resolve(&mut self) {
        if self.goldak.t_on.is_nan() {
            self.goldak.t_on = self.domain.t_end;
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.material.validate()?;
        self.goldak.validate()?;
        self.domain.validate()?;
        self.sampling.validate(&self.domain)?;
        self.network.validate()?;
        self.training.validate()?;
        self.physics.validate()?;
        self.probes.validate(&self.domain)
    }

    pub fn residual_scales(&self) -> ResidualScales {
        self.physics.scales(&self.material)
    }

    /// Serialise to the documented TOML layout.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }

    /// Apply `ARCPINN_SEED` if it is set and parses as an integer.
    pub fn apply_env_seed(&mut self) -> Result<()> {
        if let Ok(v) = std::env::var(SEED_ENV) {
            self.run.seed = v
                .trim()
                .parse()
                .map_err(|_| Error::invariant("run.seed", v.clone(), "an unsigned integer"))?;
        }
        Ok(())
    }
}

const SECTIONS: [&str; 9] = [
    "run", "material", "goldak", "domain", "sampling", "network", "training", "physics", "probes",
];

/// Parse and validate a config document.
///
/// `[domain]` must be present (it may be empty); every other section and
/// every key is optional and defaults to the standard setup.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let table: toml::Table = text.parse().map_err(|e: toml::de::Error| syntax(text, &e))?;
    for (name, value) in &table {
        if !SECTIONS.contains(&name.as_str()) {
            return Err(Error::ConfigSyntax {
                line: 0,
                column: 0,
                message: format!("unknown section or top-level key `{name}`"),
            });
        }
        if !value.is_table() {
            return Err(Error::ConfigSyntax {
                line: 0,
                column: 0,
                message: format!("`{name}` must be a [section]"),
            });
        }
    }
    if !table.contains_key("domain") {
        return Err(Error::MissingSection("domain"));
    }
    let mut cfg: RunConfig =
        toml::from_str(text).map_err(|e: toml::de::Error| syntax(text, &e))?;
    cfg.resolve();
    cfg.validate()?;
    Ok(cfg)
}

pub fn load_config(path: &std::path::Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_config(&text)
}

fn syntax(text: &str, err: &toml::de::Error) -> Error {
    let (line, column) = match err.span() {
        Some(span) => {
            let before = &text[..span.start.min(text.len())];
            let line = before.matches('\n').count() + 1;
            let column = before.len() - before.rfind('\n').map_or(0, |i| i + 1) + 1;
            (line, column)
        }
        None => (0, 0),
    };
    Error::ConfigSyntax {
        line,
        column,
        message: err.message().to_string(),
    }
}

fn positive(field: &'static str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::invariant(field, v, "a finite value > 0"))
    }
}

fn finite(field: &'static str, v: f64) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::invariant(field, v, "a finite value"))
    }
}

fn unit_interval(field: &'static str, v: f64) -> Result<()> {
    if (0.0..1.0).contains(&v) {
        Ok(())
    } else {
        Err(Error::invariant(field, v, "0 <= value < 1"))
    }
}

fn at_least_one(field: &'static str, v: usize) -> Result<()> {
    if v >= 1 {
        Ok(())
    } else {
        Err(Error::invariant(field, v, "a value >= 1"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn empty_sections_give_table_defaults() {
        let cfg = parse_config("[domain]\n[goldak]\n[material]\n").unwrap();
        assert_eq!(cfg.goldak.power, 2.45e12);
        assert_eq!(cfg.goldak.efficiency, 0.9);
        assert_eq!(cfg.goldak.velocity, 10.0);
        assert_eq!(cfg.goldak.t_on, 3.0);
        assert_eq!(cfg, RunConfig::standard());
    }

    #[test]
    fn emissivity_out_of_range_is_named() {
        let err = parse_config("[domain]\n[material]\nemissivity = 1.5\n").unwrap_err();
        match err {
            Error::Invariant { field, .. } => assert_eq!(field, "material.emissivity"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn override_passes_through() {
        let cfg = parse_config("[domain]\nlx = 80\n").unwrap();
        let mut expected = RunConfig::standard();
        expected.domain.lx = 80.0;
        assert_eq!(cfg, expected);
    }

    #[test]
    fn missing_domain_section() {
        assert!(matches!(
            parse_config("[material]\n"),
            Err(Error::MissingSection("domain"))
        ));
    }

    #[test]
    fn syntax_error_reports_position() {
        match parse_config("[domain]\nlx = = 3\n") {
            Err(Error::ConfigSyntax { line, column, .. }) => {
                assert_eq!(line, 2);
                assert!(column >= 1);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn unknown_key_rejected() {
        assert!(matches!(
            parse_config("[domain]\nwidth = 3\n"),
            Err(Error::ConfigSyntax { .. })
        ));
    }

    #[test]
    fn dt_must_divide_t_end() {
        let err = parse_config("[domain]\n[sampling]\ndt = 0.007\n").unwrap_err();
        assert!(matches!(err, Error::Invariant { field: "sampling.dt", .. }));
    }

    #[test]
    fn default_round_trips_bit_identically() {
        let mut cfg = RunConfig::desk_scale();
        cfg.physics.pde_scale = Some(1.0 / 3.0);
        cfg.material.rho = 0.1 + 0.2;
        let back = parse_config(&cfg.to_toml()).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.material.rho.to_bits(), cfg.material.rho.to_bits());
    }

    #[test]
    fn derived_constants_table_values() {
        let mat = MaterialProps::default();
        let d = derived_constants(&mat);
        let expected = 4.5e7 / (7.85e-3 * 6.2e8);
        assert_eq!(d.diffusivity, expected);
        assert!((d.diffusivity - 9.246).abs() < 1e-3);
        assert_eq!(d.stefan_boltzmann, 5.670374419e-5);
        let doubled = MaterialProps { k: 9e7, ..mat };
        assert!((doubled.diffusivity() - 2.0 * expected).abs() < 1e-12);
    }

    #[test]
    fn goldak_table_values_are_near_continuous() {
        let g = GoldakParams::default();
        assert!(((g.f_f / g.a_f) - 0.23346).abs() < 1e-5);
        assert!(((g.f_r / g.a_r) - 0.23333).abs() < 1e-5);
        assert!(g.continuity_gap() < 1e-2);
    }

    #[test]
    fn normalize_corners_and_midpoint() {
        let d = DomainSpec::default();
        assert_eq!(normalize_point([0.0; 4], &d).unwrap(), [-1.0; 4]);
        assert_eq!(normalize_point([20.0, 3.0, 2.0, 1.5], &d).unwrap(), [0.0; 4]);
        assert_eq!(normalize_point([40.0, 6.0, 4.0, 3.0], &d).unwrap(), [1.0; 4]);
        assert!(matches!(
            normalize_point([41.0, 0.0, 0.0, 0.0], &d),
            Err(Error::OutOfDomain { .. })
        ));
    }

    #[test]
    fn normalize_inverse_on_random_points() {
        use rand::{Rng, SeedableRng};
        let d = DomainSpec::default();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let mut worst: f64 = 0.0;
        for _ in 0..10_000 {
            let n: [f64; 4] = std::array::from_fn(|_| rng.random_range(-1.0..=1.0));
            let back = normalize_point(denormalize_point(n, &d), &d).unwrap();
            for i in 0..4 {
                worst = worst.max((back[i] - n[i]).abs());
            }
        }
        assert!(worst < 1e-10, "max error {worst}");
    }

    proptest! {
        #[test]
        fn denormalize_then_normalize_is_identity(
            x in 0.0..40.0f64, y in 0.0..6.0f64, z in 0.0..4.0f64, t in 0.0..3.0f64
        ) {
            let d = DomainSpec::default();
            let p = [x, y, z, t];
            let back = denormalize_point(normalize_point(p, &d).unwrap(), &d);
            for i in 0..4 {
                prop_assert!((back[i] - p[i]).abs() <= 1e-12 * d.extents()[i]);
            }
        }
    }
}
