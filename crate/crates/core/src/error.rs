//! Error type shared across the crate.

use thiserror::Error;

/// Errors produced by geometry, curve, reachability and solver operations.
#[derive(Debug, Error)]
pub enum CausalityError {
    /// A sampled point lost the single negative eigenvalue required for
    /// Lorentzian signature. Carries the witness point.
    #[error("signature collapse at {point:?}: {detail}")]
    SignatureCollapse { point: Vec<f64>, detail: String },

    /// Inputs to a convex combination were not cone-ordered.
    #[error("cone order violation at {point:?}: {detail}")]
    ConeOrderViolation { point: Vec<f64>, detail: String },

    #[error("point {point:?} outside chart domain: {detail}")]
    OutsideDomain { point: Vec<f64>, detail: String },

    #[error("curve has zero h-length")]
    ZeroLengthCurve,

    #[error("parametrization mismatch: {0}")]
    ParamMismatch(String),

    #[error("endpoints not causally related: {0}")]
    NotCausallyRelated(String),

    #[error("curve family start points do not accumulate: {0}")]
    NoAccumulation(String),

    #[error("empirical Lipschitz constant {found} exceeds declared bound {bound}")]
    LipschitzUnbounded { found: f64, bound: f64 },

    #[error("family does not converge: {0}")]
    NotConvergent(String),

    #[error("empty sample set: {0}")]
    EmptySamples(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, CausalityError>;
