use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("shape exceeds grid by {overflow_cells} cell(s) (grid side {grid_n})")]
    OutOfBounds {
        overflow_cells: usize,
        grid_n: usize,
    },

    #[error("empty mask: {0}")]
    EmptyMask(String),

    #[error("empty support: autocorrelation map has no energy above threshold")]
    EmptySupport,

    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("corrupt dataset (sample {id}): {reason}")]
    CorruptDataset { id: u64, reason: String },

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("image codec error on {path}: {source}")]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
