//! Crate-wide error type.
//!
//! Errors are grouped into three categories that the CLI maps onto exit
//! codes: usage problems (bad tokens, out-of-range parameters, missing
//! fitted parameters), data problems (malformed files, shape or id
//! mismatches, illegal values), and resource-limit refusals (the
//! exhaustive oracle declining an oversized universe).

use thiserror::Error;

/// Convenience alias used throughout the crate.
pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Coarse classification used to choose a process exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCategory {
    /// The caller asked for something malformed or unsupported.
    Usage,
    /// The inputs were readable but violated the data contract.
    Data,
    /// A guardrail refused to run an intractable computation.
    Limit,
}

#[derive(Debug, Error)]
pub enum Error {
    /// An unrecognized score or method token on the command line.
    #[error("unrecognized {what} token {token:?}")]
    InvalidToken { what: &'static str, token: String },

    /// A tuning parameter (beta, alpha, bin count, ...) outside its range.
    #[error("{0}")]
    InvalidParameter(String),

    /// A supervised method was applied without its fitted parameters.
    #[error("{0}")]
    MissingParameter(String),

    /// A probability, occurrence, or index value outside its legal range.
    #[error("{0}")]
    InvalidValue(String),

    /// Vector lengths or matrix axes that must agree did not.
    #[error("{0}")]
    ShapeMismatch(String),

    /// An operation was given an empty matrix or vector it cannot handle.
    #[error("{0}")]
    EmptyInput(String),

    /// A cell-level problem in a CSV file, located by data row and column.
    #[error("{path}: {message} at row {row}, column {column}")]
    MalformedCell {
        path: String,
        /// 1-based data row (the header is row 0).
        row: usize,
        /// Column id when known, otherwise its 1-based position.
        column: String,
        message: String,
    },

    /// A file-level problem (bad header, duplicate ids, ragged rows, ...).
    #[error("{path}: {message}")]
    MalformedFile { path: String, message: String },

    /// Ids present in one file but not its counterpart.
    #[error("{0}")]
    IdMismatch(String),

    /// Filesystem failure, tagged with the offending path.
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    /// JSON (de)serialization failure, tagged with the offending path.
    #[error("{path}: {source}")]
    Json {
        path: String,
        #[source]
        source: serde_json::Error,
    },

    /// The exhaustive oracle refused a universe above its size limit.
    #[error(
        "exhaustive oracle refuses {n_species} species (limit {max_species}); \
         enumeration would cost 2^{n_species} outcomes"
    )]
    OracleLimit { n_species: usize, max_species: usize },
}

impl Error {
    /// Which exit-code family this error belongs to.
    pub fn category(&self) -> ErrorCategory {
        match self {
            Error::InvalidToken { .. }
            | Error::InvalidParameter(_)
            | Error::MissingParameter(_) => ErrorCategory::Usage,
            Error::OracleLimit { .. } => ErrorCategory::Limit,
            _ => ErrorCategory::Data,
        }
    }
}
