use thiserror::Error;

/// Errors raised by geometry kernels, estimators and solvers.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("tangent vectors are based at different points")]
    BaseMismatch,

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: String, got: String },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("point is not on {manifold}: {reason}")]
    NotOnManifold { manifold: String, reason: String },

    #[error("{op} is not supported on {manifold}")]
    Unsupported { op: &'static str, manifold: String },

    #[error("matrix is not symmetric (asymmetry {0:e})")]
    NotSymmetric(f64),

    #[error("matrix is not positive definite (smallest eigenvalue {0:e})")]
    NotPositiveDefinite(f64),

    #[error("symmetric eigendecomposition did not converge")]
    EigenFailure,

    #[error("linear system is singular")]
    Singular,

    #[error("conjugate gradient breakdown: operator is not positive definite (curvature {0:e})")]
    IndefiniteOperator(f64),

    #[error("problem has no stochastic samplers")]
    MissingSampler,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn dims(expected: impl ToString, got: impl ToString) -> Self {
        Error::DimensionMismatch {
            expected: expected.to_string(),
            got: got.to_string(),
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
