use std::path::PathBuf;

use chrono::NaiveDate;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Broad failure category, used by front ends to pick exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    Data,
    Numerical,
    Io,
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("schema error: {0}")]
    Schema(String),

    #[error("parse error at row {row}: {message}")]
    Parse { row: usize, message: String },

    #[error("data error: {0}")]
    Data(String),

    #[error("duplicate date {0}")]
    DuplicateDate(NaiveDate),

    #[error("insufficient data: need {needed}, got {got}")]
    InsufficientData { needed: usize, got: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("matrix is not positive definite")]
    NotPositiveDefinite,

    #[error("regime {regime} collapsed: effective sample mass {mass:.3} below {required}")]
    RegimeCollapse { regime: usize, mass: f64, required: usize },

    #[error("non-finite value at index {index}: {context}")]
    NonFinite { index: usize, context: String },

    #[error("training failed: {0}")]
    TrainingFailed(String),

    #[error("calendar mismatch: {0}")]
    Calendar(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("unsupported model bundle version {found} (expected {expected})")]
    BundleVersion { found: u32, expected: u32 },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Config(_) | Error::BundleVersion { .. } => ErrorKind::Config,
            Error::Schema(_)
            | Error::Parse { .. }
            | Error::Data(_)
            | Error::DuplicateDate(_)
            | Error::InsufficientData { .. }
            | Error::DimensionMismatch { .. }
            | Error::Calendar(_)
            | Error::Csv(_)
            | Error::Json(_) => ErrorKind::Data,
            Error::NotPositiveDefinite | Error::RegimeCollapse { .. } | Error::NonFinite { .. } | Error::TrainingFailed(_) => {
                ErrorKind::Numerical
            }
            Error::Io { .. } => ErrorKind::Io,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
