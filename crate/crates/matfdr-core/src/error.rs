use alloc::string::String;
use core::fmt;

/// Errors raised by the estimation and testing routines.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Invalid argument or model parameter (non-SPD covariance, bad dimension, ...).
    Parameter(String),
    /// A class has too few columns for a pooled variance.
    DegenerateClass(String),
    /// An iterative solver hit its iteration cap; carries the final residual.
    NonConvergence { what: String, residual: f64 },
    /// Degenerate data made a procedure ill-posed (zero density, constant stats, ...).
    Degenerate(String),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Parameter(s) => write!(f, "invalid parameter: {s}"),
            Error::DegenerateClass(s) => write!(f, "degenerate class: {s}"),
            Error::NonConvergence { what, residual } => {
                write!(f, "{what} did not converge (residual {residual:e})")
            }
            Error::Degenerate(s) => write!(f, "degenerate input: {s}"),
        }
    }
}

impl core::error::Error for Error {}
