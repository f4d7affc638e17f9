//! Error taxonomy shared across the crate.
//!
//! Errors are grouped by how a caller should react: [`Error::Structural`] and
//! [`Error::Validation`] mean the input itself is bad, [`Error::Precondition`]
//! means the input is fine but not yet in the form an operation requires,
//! [`Error::Resource`] refuses oversized problems, and [`Error::Internal`]
//! flags a consistency failure that indicates a bug rather than bad input.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Malformed or incompatible input: wrong table length, scenario
    /// mismatch, bad matrix shape, unparsable file.
    #[error("structural error: {0}")]
    Structural(String),

    /// An invariant of an otherwise well-formed object failed, with the
    /// offending entry and residual named in the message.
    #[error("validation error: {0}")]
    Validation(String),

    /// The input is valid but not in the form this operation requires
    /// (e.g. non-projective effects handed to a range computation).
    #[error("precondition not met: {0}")]
    Precondition(String),

    /// Problem size exceeds a documented guard.
    #[error("resource limit: {0}")]
    Resource(String),

    /// A numerical routine failed to reach its tolerance.
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// A consistency check that should hold for every valid input failed.
    #[error("internal consistency failure: {0}")]
    Internal(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Process exit code used by the command-line interface: 2 for bad
    /// input, 3 for unmet preconditions or resource guards, 4 for numerical
    /// or internal failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Structural(_) | Error::Validation(_) => 2,
            Error::Precondition(_) | Error::Resource(_) => 3,
            Error::Numerical(_) | Error::Internal(_) => 4,
        }
    }
}
