use std::io;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("empty input")]
    EmptyInput,

    #[error("empty batch")]
    EmptyBatch,

    #[error("empty index: no postings survive sparsification")]
    EmptyIndex,

    #[error("empty query set")]
    EmptyQuerySet,

    #[error("diverged: {0}")]
    Diverged(String),

    #[error("invalid vector `{id}`: {reason}")]
    InvalidVector { id: String, reason: String },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("weight {weight} exceeds quantization range {global_max}")]
    OutOfRange { weight: f64, global_max: f64 },

    #[error("bad magic: expected SPHT, found {0:?}")]
    BadMagic([u8; 4]),

    #[error("unsupported index format version {0}")]
    BadVersion(u32),

    #[error("truncated index: {0}")]
    Truncated(String),

    #[error("corrupt index: {0}")]
    Corrupt(String),

    #[error("parse error at {location}: {reason}")]
    Parse { location: String, reason: String },

    #[error("unknown id `{0}`")]
    UnknownId(String),

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    pub(crate) fn parse(location: impl Into<String>, reason: impl ToString) -> Self {
        Error::Parse {
            location: location.into(),
            reason: reason.to_string(),
        }
    }
}
