use std::path::PathBuf;

use thiserror::Error;

/// Broad failure classes, used by the command line front end to pick exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    Io,
    Format,
    Numerical,
    Data,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid calibration: {0}")]
    InvalidCalibration(String),

    #[error("invalid range: near ({near}) must be below far ({far})")]
    InvalidRange { near: f64, far: f64 },

    #[error("invalid box: {0}")]
    InvalidBox(String),

    #[error("empty point cloud")]
    EmptyCloud,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("degenerate embedding: zero-norm vector cannot be normalized")]
    DegenerateEmbedding,

    #[error("stale cache: forward pass was computed with different parameters")]
    StaleCache,

    #[error("embedding provider has no entry for key {0:?}")]
    ProviderMiss(String),

    #[error("duplicate class {0:?}")]
    DuplicateClass(String),

    #[error("template must contain exactly one `{{}}` placeholder, found {0}")]
    PlaceholderCount(usize),

    #[error("empty dataset")]
    EmptyDataset,

    #[error("missing label for instance {0:?}")]
    MissingLabel(String),

    #[error("non-finite loss at step {step}")]
    NonFiniteLoss { step: usize },

    #[error("format error in {context}: {message}")]
    Format { context: String, message: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn format(context: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Format {
            context: context.into(),
            message: message.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Io { .. } => ErrorKind::Io,
            Error::Format { .. } => ErrorKind::Format,
            Error::NonFiniteLoss { .. } | Error::DegenerateEmbedding => ErrorKind::Numerical,
            Error::Config(_)
            | Error::InvalidParameter(_)
            | Error::InvalidRange { .. }
            | Error::InvalidCalibration(_)
            | Error::PlaceholderCount(_) => ErrorKind::Config,
            _ => ErrorKind::Data,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
