use std::path::PathBuf;

use thiserror::Error;

/// Errors raised across the toolkit.
///
/// Validation problems with aperture schedules are not errors; see
/// [`crate::aperture::Violation`].
#[derive(Debug, Error)]
pub enum Error {
    #[error("missing view ({u},{v}) in light-field directory")]
    MissingView { u: usize, v: usize },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("index out of range: {0}")]
    Index(String),
    #[error("invalid scene specification: {0}")]
    Spec(String),
    #[error("invalid schedule seed: {0}")]
    Seed(String),
    #[error("invalid schedule: {0}")]
    Schedule(String),
    #[error("invalid timing configuration: {0}")]
    Timing(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("overflow: {0}")]
    Overflow(String),
    #[error("singular system: {0}")]
    Singular(String),
    #[error("instance too large: {0}")]
    Size(String),
    #[error("incomplete pattern cycle: {0}")]
    IncompleteCycle(String),
    #[error("segmentation failed: {0}")]
    Segmentation(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("image error on {path}: {source}")]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
