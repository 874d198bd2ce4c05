use thiserror::Error;

use crate::trace::{LineError, UserId};

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("missing or malformed trace header: {0}")]
    Header(String),

    #[error("line {}: {}", .0.line_no, .0.reason)]
    Line(LineError),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("unknown user {0}")]
    UnknownUser(UserId),

    #[error("group {group_id} is not connected")]
    Disconnected { group_id: UserId },

    #[error("insufficient data: {0}")]
    Insufficient(String),

    /// An internal consistency check failed. Distinct from bad input.
    #[error("invariant violated: {0}")]
    Invariant(String),
}

impl Error {
    /// Whether the error stems from the caller's input rather than a bug.
    pub fn is_input_error(&self) -> bool {
        !matches!(self, Error::Invariant(_))
    }
}
