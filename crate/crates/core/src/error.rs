use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("config syntax error at line {line}, column {column}: {message}")]
    ConfigSyntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("config is missing required section [{0}]")]
    MissingSection(&'static str),
    #[error("invalid value for `{field}`: {value} (expected {bound})")]
    Invariant {
        field: &'static str,
        value: String,
        bound: String,
    },
    #[error("point {point:?} lies outside the domain")]
    OutOfDomain { point: [f64; 4] },
    #[error("Sobol dimension {requested} exceeds the table capacity of {capacity}")]
    SobolDimension { requested: usize, capacity: usize },
    #[error("z-warp exponent must be positive, got {0}")]
    WarpExponent(f64),
    #[error("sampling: {0}")]
    Sampling(String),
    #[error("non-finite parameter at flat index {0}")]
    NonFiniteParameter(usize),
    #[error("non-finite loss or gradient at collocation point {point} ({category})")]
    NonFinite { point: usize, category: &'static str },
    #[error("robin residual requested on the bottom (-z) face, which carries a Dirichlet condition")]
    BottomFaceRobin,
    #[error("loss category `{0}` is empty")]
    EmptyCategory(&'static str),
    #[error("lattice mismatch: {0}")]
    LatticeMismatch(String),
    #[error("Picard iteration did not converge at step {step} (last change {change:e} degC)")]
    PicardDivergence { step: usize, change: f64 },
    #[error("conjugate gradients stalled at step {step} (relative residual {residual:e})")]
    LinearSolve { step: usize, residual: f64 },
    #[error("grid spacing {spacing} does not divide extent {extent}")]
    GridExtent { spacing: f64, extent: f64 },
    #[error("probe {0:?} lies outside the domain")]
    ProbeOutside([f64; 4]),
    #[error("source point at distance {0} mm is inside the Rosenthal cutoff")]
    RosenthalCutoff(f64),
    #[error("training aborted: loss became non-finite at epoch {epoch}")]
    NanAbort { epoch: usize },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("grid file: {0}")]
    GridFormat(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn invariant(
        field: &'static str,
        value: impl std::fmt::Display,
        bound: impl Into<String>,
    ) -> Self {
        Error::Invariant {
            field,
            value: value.to_string(),
            bound: bound.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
