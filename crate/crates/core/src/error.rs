use alloc::string::String;

/// Errors raised by the numerical routines of this crate.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("matrix is not symmetric")]
    NotSymmetric,
    #[error("matrix is not positive definite (pivot {pivot})")]
    NotPositiveDefinite { pivot: usize },
    #[error("near-zero pivot {pivot} in signed Cholesky factorization")]
    SingularPivot { pivot: usize },
    #[error("triangular matrix has a zero diagonal entry at {index}")]
    SingularTriangular { index: usize },
    #[error("kernel or ambient dimension mismatch")]
    KernelMismatch,
    #[error("precondition violated: {0}")]
    Precondition(&'static str),
    #[error("density has zero trace")]
    DegenerateDensity,
    #[error("density is not normalized (trace {trace})")]
    NotNormalized { trace: f64 },
    #[error("effect eigenvalue {value} outside (0, 1]")]
    InvalidEffect { value: f64 },
    #[error("logarithm of non-positive eigenvalue {value}")]
    Domain { value: f64 },
    #[error("numerical breakdown: {0}")]
    NumericalBreakdown(&'static str),
    #[error("cannot select a regularization weight: degenerate denominator")]
    CannotSelectLambda,
    #[error("interior point solver failed after {iterations} iterations")]
    SolverFailure { iterations: usize },
    #[error("reduction removed every pre-image")]
    DegenerateResult,
    #[error("KKT factorization failed in block {block}")]
    Factorization { block: &'static str },
}

pub type Result<T> = core::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidInput(msg.into())
}
