use thiserror::Error;

/// Errors raised by the detection pipeline.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("matrix contains non-finite entries")]
    NonFinite,
    #[error("matrix is not symmetric at ({row}, {col})")]
    NotSymmetric { row: usize, col: usize },
    #[error("eigendecomposition did not converge within its sweep budget")]
    NoConvergence,
    #[error("matrix is not positive definite")]
    NotPositiveDefinite,
    #[error("covariance input must be PSD with a strictly positive diagonal")]
    NotPsd,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid segment ({start}, {end}] for n = {n}")]
    InvalidSegment { start: usize, end: usize, n: usize },
    #[error("no variable has the required number of observations in the segment")]
    EmptySubset,
    #[error("segment contains missing values")]
    HasMissing,
    #[error("a variable is missing on every row of the segment")]
    DegenerateRho,
    #[error("gain curve is empty")]
    EmptyCurve,
    #[error("dynamic programming cap exceeded: n = {n} > {cap}")]
    CapExceeded { n: usize, cap: usize },
    #[error("partition sizes differ: {left} vs {right}")]
    SizeMismatch { left: usize, right: usize },
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
