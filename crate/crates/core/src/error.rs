use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("clip too short: {have} frames, need {need}")]
    ClipTooShort { have: usize, need: usize },

    #[error("class too small to stratify: {label} has {count} clip(s)")]
    ClassTooSmall { label: String, count: usize },

    #[error("insufficient clips for stratification: {label} has {count} clip(s), k={k}")]
    InsufficientClips { label: String, count: usize, k: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("missing branch {branch} for clip {clip}")]
    MissingBranch { clip: String, branch: String },

    #[error("manifest: {0}")]
    Manifest(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("config: {0}")]
    Config(String),

    #[error("training diverged: {0}")]
    Diverged(String),

    #[error("io error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("image error at {path}: {source}")]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
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
