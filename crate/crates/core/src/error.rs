use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("invalid dimension: {0}")]
    InvalidDimension(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("degenerate spectrum: {0}")]
    DegenerateSpectrum(String),
    #[error("degenerate data: {0}")]
    DegenerateData(String),
    #[error("missing labels: {0}")]
    MissingLabels(String),
    #[error("missing model for metric {0}")]
    MissingModel(String),
    #[error("schema error at line {line}: {message}")]
    Schema { line: usize, message: String },
    #[error("corrupt store {path}: {message}")]
    CorruptStore { path: PathBuf, message: String },
    #[error("unsupported version: {0}")]
    UnsupportedVersion(String),
    #[error("invalid feedback: {0}")]
    InvalidFeedback(String),
    #[error("not ready: {0}")]
    NotReady(String),
    #[error("adaptation failed: {0}")]
    AdaptationFailed(String),
    #[error("invalid eigenvalues: {0}")]
    InvalidEigenvalues(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    /// Stable machine-readable code, used by the HTTP layer and CLI.
    pub fn code(&self) -> &'static str {
        match self {
            Error::InsufficientData(_) => "INSUFFICIENT_DATA",
            Error::InvalidDimension(_) => "INVALID_DIMENSION",
            Error::InvalidInput(_) => "INVALID_INPUT",
            Error::DegenerateSpectrum(_) => "DEGENERATE_SPECTRUM",
            Error::DegenerateData(_) => "DEGENERATE_DATA",
            Error::MissingLabels(_) => "MISSING_LABELS",
            Error::MissingModel(_) => "MISSING_MODEL",
            Error::Schema { .. } => "SCHEMA_ERROR",
            Error::CorruptStore { .. } => "CORRUPT_STORE",
            Error::UnsupportedVersion(_) => "UNSUPPORTED_VERSION",
            Error::InvalidFeedback(_) => "FEEDBACK_SIZE",
            Error::NotReady(_) => "NOT_READY",
            Error::AdaptationFailed(_) => "ADAPTATION_FAILED",
            Error::InvalidEigenvalues(_) => "INVALID_EIGENVALUES",
            Error::Io { .. } => "IO_ERROR",
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}
