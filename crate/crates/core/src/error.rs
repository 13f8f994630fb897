//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),

    #[error("encode error: {0}")]
    Encode(String),

    #[error("decode error in frame {frame}: {reason}")]
    Decode { frame: usize, reason: String },

    #[error("truncated payload: need {need} bytes, got {got}")]
    Truncated { need: usize, got: usize },

    #[error("nonzero padding bits in strict mode")]
    Padding,

    #[error("estimation error: {0}")]
    Estimation(String),

    #[error("degenerate channel: {0}")]
    DegenerateChannel(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
