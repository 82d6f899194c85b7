use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape error: {0}")]
    Shape(String),

    #[error("non-finite value produced by `{op}` at flat index {index}")]
    NonFinite { op: String, index: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("target of length {target_len} needs at least {required} frames, got {frames}")]
    TargetTooLong { target_len: usize, required: usize, frames: usize },

    #[error("invalid config: {0}")]
    Config(String),

    #[error("bad {what} file: expected magic {expected:?}, found {found:?}")]
    BadMagic { what: &'static str, expected: String, found: String },

    #[error("unsupported {what} format version {found} (expected {expected})")]
    Version { what: &'static str, expected: u32, found: u32 },

    #[error("checkpoint kind mismatch: expected {expected}, found {found}")]
    KindMismatch { expected: String, found: String },

    #[error("truncated or malformed {what}: {detail}")]
    Malformed { what: &'static str, detail: String },

    #[error("training diverged at epoch {epoch}: {detail}")]
    Diverged { epoch: usize, detail: String },

    #[error("I/O error on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}
