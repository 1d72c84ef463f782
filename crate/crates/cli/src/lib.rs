//! Command implementations behind the `deflicker` binary.

pub mod commands;
pub mod config;

use deflicker::{CheckpointError, Error};

/// Process exit codes.
pub mod exit {
    pub const OK: u8 = 0;
    /// A verification command ran but something failed its check.
    pub const CHECK_FAILED: u8 = 1;
    /// Bad command-line usage (reported by the argument parser).
    pub const USAGE: u8 = 2;
    pub const IO: u8 = 3;
    /// Malformed config, checkpoint or image file, or an invalid setting.
    pub const PARSE: u8 = 4;
    pub const SHAPE: u8 = 5;
    /// Non-finite values, divergence or degenerate numeric input.
    pub const NUMERIC: u8 = 6;
}

pub fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Io(_) => exit::IO,
        Error::Parse { .. } | Error::Config(_) | Error::Image(_) => exit::PARSE,
        Error::Checkpoint(
            CheckpointError::ShapeMismatch { .. }
            | CheckpointError::MissingNames(_)
            | CheckpointError::UnexpectedNames(_),
        ) => exit::SHAPE,
        Error::Checkpoint(_) => exit::PARSE,
        Error::Shape(_) => exit::SHAPE,
        Error::NonFinite(_)
        | Error::Diverged { .. }
        | Error::Degenerate(_)
        | Error::Autodiff(_) => exit::NUMERIC,
    }
}
