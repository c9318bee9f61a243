use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Everything that can go wrong between reading a flow CSV and writing a report.
#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("missing required column {column:?}")]
    Schema { column: String },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("empty data: {0}")]
    EmptyData(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("insufficient data: {n} samples but window length is {t}")]
    InsufficientData { n: usize, t: usize },

    #[error("index {index} out of range for {len} samples")]
    Bounds { index: usize, len: usize },

    #[error("non-finite value: {0}")]
    Numeric(String),

    #[error("training diverged: non-finite loss at epoch {epoch}, step {step}")]
    Divergence { epoch: usize, step: usize },

    #[error("unsupported {kind} version {found} (expected {expected})")]
    Version {
        kind: &'static str,
        found: u32,
        expected: u32,
    },

    #[error("calibration error: {0}")]
    Calibration(String),

    #[error("nothing to evaluate")]
    EmptyEval,

    #[error("AUC is undefined: {0}")]
    UndefinedAuc(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code: 2 for validation errors, 3 for data errors, 4 for divergence.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Parameter(_) | Error::Contract(_) | Error::Shape(_) | Error::Bounds { .. } => 2,
            Error::Divergence { .. } | Error::Numeric(_) => 4,
            _ => 3,
        }
    }
}
