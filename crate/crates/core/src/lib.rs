//! Physics-informed neural-network simulator for transient heat conduction in
//! a plate under a moving Goldak double-ellipsoid heat source.
//!
//! The crate trains a small GELU network purely from PDE and boundary
//! residuals and ships an implicit finite-difference solver to check the
//! result against. Numerical code is generic over [`Real`] (`f32` or `f64`);
//! the aliases below fix the common instantiations.

pub mod activation;
pub mod checkpoint;
pub mod config;
pub mod error;
pub mod grid;
pub mod jet_batch;
pub mod loss;
pub mod metrics;
pub mod mlp;
pub mod optim;
pub mod oracle;
pub mod physics;
pub mod real;
pub mod sampling;
pub mod sobol;
pub mod train;

pub use config::{
    derived_constants, normalize_point, denormalize_point, parse_config, DomainSpec,
    GoldakParams, MaterialProps, RadiationConvention, RunConfig,
};
pub use error::{Error, Result};
pub use real::Real;
pub use grid::{GridSpec, TemperatureGrid};

pub type MlpParams32 = mlp::MlpParams<f32>;
pub type MlpParams64 = mlp::MlpParams<f64>;
pub type Jet32 = mlp::Jet<f32>;
pub type Jet64 = mlp::Jet<f64>;
pub type OutputTransform32 = mlp::OutputTransform<f32>;
pub type OutputTransform64 = mlp::OutputTransform<f64>;
pub type Checkpoint32 = checkpoint::Checkpoint<f32>;
pub type Checkpoint64 = checkpoint::Checkpoint<f64>;
pub type TrainingProblem32 = train::TrainingProblem<f32>;
pub type TrainingProblem64 = train::TrainingProblem<f64>;
pub type PinnModel32 = metrics::PinnModel<f32>;
pub type PinnModel64 = metrics::PinnModel<f64>;
pub type Adam32 = optim::Adam<f32>;
pub type Adam64 = optim::Adam<f64>;
pub type Lbfgs32 = optim::Lbfgs<f32>;
pub type Lbfgs64 = optim::Lbfgs<f64>;
