use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("not a binary PGM: expected magic \"P5\", found {found:?}")]
    WrongMagic { found: String },
    #[error("malformed PGM header: {0}")]
    BadHeader(String),
    #[error("unsupported PGM maxval {0} (must be 1..=255)")]
    BadMaxval(u32),
    #[error("truncated PGM payload: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },
    #[error("invalid image: {0}")]
    InvalidImage(String),
    #[error("rectangle {x},{y} {w}x{h} is outside a {width}x{height} image")]
    OutOfBounds {
        x: usize,
        y: usize,
        w: usize,
        h: usize,
        width: usize,
        height: usize,
    },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("shape error: {0}")]
    Shape(String),
    #[error("masked loss has no pixels to supervise")]
    EmptyLossMask,
    #[error("png error on {path}: {reason}")]
    Png { path: PathBuf, reason: String },
    #[error("invalid checkpoint: {0}")]
    Checkpoint(String),
    #[error("cannot parse {what} {input:?}: {reason}")]
    Parse {
        what: &'static str,
        input: String,
        reason: String,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }

    pub(crate) fn parse(what: &'static str, input: &str, reason: impl Into<String>) -> Self {
        Error::Parse {
            what,
            input: input.to_string(),
            reason: reason.into(),
        }
    }
}
