use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the spotting pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("cannot decode image {path}: {message}")]
    Image { path: PathBuf, message: String },

    /// Problems with on-disk data: missing frames, inconsistent sizes, bad schemas.
    #[error("load error: {0}")]
    Load(String),

    #[error("schema error: {0}")]
    Schema(String),

    #[error("validation error: {0}")]
    Validation(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("degenerate geometry: {0}")]
    Geometry(String),

    #[error("mask fit error: {0}")]
    Fit(String),

    #[error("feature error: {0}")]
    Feature(String),

    #[error("sequence too short: {0}")]
    TooShort(String),

    #[error("length mismatch: {0}")]
    Mismatch(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by user-supplied configuration rather than data.
    pub fn is_config(&self) -> bool {
        matches!(self, Error::Config(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;
