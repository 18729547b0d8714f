use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("malformed mask: {0}")]
    MalformedMask(String),

    #[error("empty region: {0}")]
    EmptyRegion(&'static str),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("grid too small: {height}x{width} (need at least {min}x{min})")]
    TooSmall {
        height: usize,
        width: usize,
        min: usize,
    },

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("{format} format error: {message}")]
    Format {
        format: &'static str,
        message: String,
    },

    #[error("corrupt feature map: {0}")]
    CorruptFeature(String),

    #[error("missing prototype: {0:?}")]
    MissingPrototype(String),

    #[error("missing embedding key: {0:?}")]
    MissingKey(String),

    #[error("subprocess failed: {0}")]
    Subprocess(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("image codec error on {path}: {message}")]
    Codec { path: PathBuf, message: String },

    #[error("{stage} stage failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn format(format: &'static str, message: impl Into<String>) -> Self {
        Error::Format {
            format,
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Wrap an error with the pipeline stage it came from.
    pub fn in_stage(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }
}
