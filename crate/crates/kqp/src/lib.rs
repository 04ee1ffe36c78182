//! File formats and command-line front end for `kqp-core`.

pub mod cli;
pub mod error;
pub mod format;

pub use error::CliError;
pub use format::Decomposition;
