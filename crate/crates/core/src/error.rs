use thiserror::Error;

/// Errors raised across the library.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("matrix is not positive semidefinite (min eigenvalue {min_eig:e})")]
    NotPsd { min_eig: f64 },
    #[error("matrix is singular or not positive definite (min eigenvalue {min_eig:e})")]
    SingularMatrix { min_eig: f64 },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("dimension {0} exceeds the supported maximum of {max}", max = crate::linalg::MAX_DIM)]
    DimensionTooLarge(usize),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("malformed Markov chain: {0}")]
    MalformedChain(String),
    #[error("weight tail sum vanishes at recursion level {level}")]
    WeightDegenerate { level: usize },
    #[error("distortion constraint infeasible (margin {margin:e})")]
    InfeasibleDistortion { margin: f64 },
    #[error("source covariance exceeds the constraint (margin {margin:e})")]
    CovarianceViolation { margin: f64 },
    #[error("interpolation parameter {0} outside [0, 1]")]
    GammaOutOfRange(f64),
    #[error("unsupported weights: {0}")]
    UnsupportedWeights(String),
}

pub type Result<T> = std::result::Result<T, Error>;
