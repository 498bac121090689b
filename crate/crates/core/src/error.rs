use std::io;

use thiserror::Error;

pub type Result<T, E = NciError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum NciError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("parse error at line {line}: {msg}")]
    ParseLine { line: usize, msg: String },

    #[error("parse error at byte {offset}: {msg}")]
    ParseByte { offset: u64, msg: String },

    #[error("degenerate code: {0}")]
    DegenerateCode(String),

    #[error("under-determined fit: {0}")]
    UnderDetermined(String),

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl NciError {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        NciError::InvalidArgument(msg.into())
    }

    pub(crate) fn at_line(line: usize, msg: impl Into<String>) -> Self {
        NciError::ParseLine { line, msg: msg.into() }
    }

    pub(crate) fn at_byte(offset: u64, msg: impl Into<String>) -> Self {
        NciError::ParseByte { offset, msg: msg.into() }
    }
}
