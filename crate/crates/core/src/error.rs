use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("density has no quadratic expansion at the identity: {0}")]
    NotExpandable(String),

    #[error("solver did not converge within {max_iter} iterations (residual {residual:e})")]
    NotConverged { max_iter: usize, residual: f64 },

    #[error("quadratic form is indefinite (Rayleigh quotient {0:e})")]
    IndefiniteForm(f64),

    #[error("every start of the multistart minimization failed")]
    AllStartsFailed,

    #[error("bending ansatz needs 0 <= delta < 1/2 in two dimensions, got {0}")]
    InvalidDelta(f64),

    #[error("unsupported load: {0}")]
    UnsupportedLoad(String),

    #[error("quadratic fit needs at least 3 perturbation sizes, got {0}")]
    FitIllConditioned(usize),

    #[error("microstructure is not resolved by the grid: {0}")]
    UnresolvedGeometry(String),

    #[error("malformed field data: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
