//! Error type shared across the crate.

use std::fmt;

/// Errors surfaced by problem setup, evaluation, and the drivers.
///
/// Step rejection and solver divergence are not errors; they are reported
/// through step outcomes and [`crate::steppers::Termination`]. `Error` is for
/// conditions the caller has to fix or handle structurally.
#[derive(Debug)]
pub enum Error {
    /// Invalid configuration (tolerances, scheme/problem mismatch, options).
    Config(String),
    /// An operation needed a callback the problem does not define.
    MissingCallback(&'static str),
    /// A vector or matrix had the wrong size for the problem.
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    /// A user callback produced NaN or infinity at the given component.
    NonFinite { what: &'static str, index: usize },
    /// LU elimination hit a pivot below the singularity threshold.
    SingularMatrix { pivot_index: usize },
    /// Registry lookup failed; `suggestions` lists near misses.
    UnknownScheme {
        name: String,
        suggestions: Vec<String>,
    },
    /// File output failed (monitor sinks report separately; this is for
    /// explicit dump/spill calls).
    Io(std::io::Error),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Config(msg) => write!(f, "invalid configuration: {msg}"),
            Error::MissingCallback(what) => {
                write!(f, "problem does not define {what}")
            }
            Error::DimensionMismatch {
                what,
                expected,
                got,
            } => write!(f, "{what}: expected length {expected}, got {got}"),
            Error::NonFinite { what, index } => {
                write!(f, "{what} produced a non-finite value at component {index}")
            }
            Error::SingularMatrix { pivot_index } => {
                write!(f, "matrix is singular to working precision (pivot {pivot_index})")
            }
            Error::UnknownScheme { name, suggestions } => {
                if suggestions.is_empty() {
                    write!(f, "unknown scheme '{name}'")
                } else {
                    write!(f, "unknown scheme '{name}', did you mean: {}", suggestions.join(", "))
                }
            }
            Error::Io(e) => write!(f, "i/o failure: {e}"),
        }
    }
}

impl std::error::Error for Error {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            Error::Io(e) => Some(e),
            _ => None,
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e)
    }
}

pub type Result<T> = std::result::Result<T, Error>;
