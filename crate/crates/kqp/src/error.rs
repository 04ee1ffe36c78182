use std::path::Path;

use kqp_core::Error;

/// Error of a CLI command, carrying its process exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Input(String),
    #[error("{0}")]
    Degenerate(String),
    #[error("{0}")]
    Solver(String),
}

impl CliError {
    pub fn input(msg: impl Into<String>) -> Self {
        CliError::Input(msg.into())
    }

    pub fn io(path: &Path, e: std::io::Error) -> Self {
        CliError::Input(format!("{}: {e}", path.display()))
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) => 2,
            CliError::Degenerate(_) => 3,
            CliError::Solver(_) => 4,
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let msg = e.to_string();
        match e {
            Error::DegenerateDensity | Error::DegenerateResult | Error::CannotSelectLambda => CliError::Degenerate(msg),
            Error::SolverFailure { .. }
            | Error::Factorization { .. }
            | Error::NumericalBreakdown(_)
            | Error::NotPositiveDefinite { .. }
            | Error::SingularPivot { .. }
            | Error::SingularTriangular { .. } => CliError::Solver(msg),
            Error::InvalidInput(_)
            | Error::NotSymmetric
            | Error::KernelMismatch
            | Error::Precondition(_)
            | Error::NotNormalized { .. }
            | Error::InvalidEffect { .. }
            | Error::Domain { .. } => CliError::Input(msg),
        }
    }
}
