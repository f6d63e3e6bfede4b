//! Command-line companion to `matfdr-core`: file formats, scenario
//! configuration, the simulation harness, and plotting.

#![deny(unsafe_code)]

use std::path::Path;

pub mod harness;
pub mod io;
pub mod scenario;
pub mod svg;

/// Errors surfaced to the CLI, partitioned by exit code:
/// configuration problems exit 2, numerical non-convergence 3, I/O 4.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("numerical error: {0}")]
    Numeric(String),
    #[error("I/O error: {0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numeric(_) => 3,
            CliError::Io(_) => 4,
        }
    }

    /// Adapter for `map_err` on `std::io` results, recording the path.
    pub fn from_io(path: &Path) -> impl Fn(std::io::Error) -> CliError + '_ {
        move |e| CliError::Io(format!("{}: {e}", path.display()))
    }
}

impl From<matfdr_core::Error> for CliError {
    fn from(e: matfdr_core::Error) -> Self {
        match e {
            matfdr_core::Error::NonConvergence { .. } => CliError::Numeric(e.to_string()),
            other => CliError::Config(other.to_string()),
        }
    }
}
