use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("non-finite value at voxel {0}")]
    NonFinite(usize),

    #[error("index {index:?} out of bounds for dims {dims:?}")]
    OutOfBounds { index: [usize; 3], dims: [usize; 3] },

    #[error("invalid series: {0}")]
    InvalidSeries(String),

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("malformed file {path}: {reason}")]
    Malformed { path: PathBuf, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("nifti: {0}")]
    Nifti(#[from] nifti::NiftiError),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn malformed(path: impl Into<PathBuf>, reason: impl Into<String>) -> Self {
        Error::Malformed {
            path: path.into(),
            reason: reason.into(),
        }
    }

    /// True when the failure came from the filesystem rather than from the
    /// content of an input.
    pub fn is_io(&self) -> bool {
        matches!(self, Error::Io(_) | Error::Nifti(nifti::NiftiError::Io(_)))
    }
}
