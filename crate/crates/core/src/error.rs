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
    #[error("format error: {0}")]
    Format(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("dimension mismatch: expected {expected:?}, got {actual:?}")]
    Dimensions {
        expected: (usize, usize),
        actual: (usize, usize),
    },
    #[error("projection mismatch: {0}")]
    SpecMismatch(String),
    #[error("non-finite flow component at pixel ({x}, {y})")]
    NonFinite { x: usize, y: usize },
    #[error("image codec error: {0}")]
    Image(#[from] ::image::ImageError),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Configuration problems are the caller's fault; everything else is a data
    /// or environment problem.
    pub fn is_config(&self) -> bool {
        matches!(self, Error::Config(_))
    }
}
