//! Command implementations and data ingestion for the `treernn` binary.

pub mod commands;
pub mod config;
pub mod sick;

use treernn_core::error::Error;

/// Process exit code for an error: 1 for usage/configuration problems,
/// 2 for malformed data, 3 for numeric failures.
pub fn exit_code(error: &Error) -> i32 {
    match error {
        Error::Usage(_) | Error::Incompatible(_) | Error::Io(_) => 1,
        Error::Format { .. }
        | Error::MalformedTree { .. }
        | Error::Data(_)
        | Error::DimensionMismatch { .. } => 2,
        Error::Domain(_) | Error::State(_) => 3,
    }
}
