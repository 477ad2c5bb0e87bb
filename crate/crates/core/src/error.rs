//! Crate-wide error type.

use std::io;

/// Errors raised by tensor operations, data ingestion, and training.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Operand shapes do not agree for the named operation.
    #[error("{op}: dimension mismatch: {lhs} vs {rhs}")]
    DimensionMismatch {
        op: &'static str,
        lhs: String,
        rhs: String,
    },

    /// A value fell outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// An operation was invoked in a state that forbids it.
    #[error("state error: {0}")]
    State(String),

    /// A tree read from CoNLL-U input violates tree structure.
    #[error("malformed tree in sentence {ordinal}: {reason}")]
    MalformedTree { ordinal: usize, reason: String },

    /// A text input could not be parsed.
    #[error("format error at line {line}: {reason}")]
    Format { line: usize, reason: String },

    /// A record carries values outside its documented range.
    #[error("data error: {0}")]
    Data(String),

    /// The caller supplied arguments that cannot be acted on.
    #[error("usage error: {0}")]
    Usage(String),

    /// A checkpoint does not match the requested task or data.
    #[error("compatibility error: {0}")]
    Incompatible(String),

    #[error(transparent)]
    Io(#[from] io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
