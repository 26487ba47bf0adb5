use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, OfiError>;

#[derive(Debug, Error)]
pub enum OfiError {
    #[error("cannot open {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: line {line}: {message}")]
    MalformedRow {
        path: PathBuf,
        line: u64,
        message: String,
    },

    #[error("empty series")]
    EmptySeries,

    #[error("series too short: need at least {needed} rows, got {got}")]
    SeriesTooShort { needed: usize, got: usize },

    #[error("invalid {what}: {reason}")]
    InvalidParameter { what: &'static str, reason: String },

    #[error("negative count ({value}) for {side}")]
    NegativeCount { side: &'static str, value: i64 },

    #[error("timestamps must increase by exactly 1: {prev} followed by {next}")]
    NonMonotoneTimestamps { prev: i64, next: i64 },

    #[error("trade events are not sorted by timestamp at position {index}")]
    UnsortedEvents { index: usize },

    #[error("design matrix is rank deficient; dependent regressors: {}", .columns.join(", "))]
    RankDeficient { columns: Vec<String> },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("empty input")]
    EmptyInput,

    #[error("actual values have zero variance; R² is undefined")]
    ZeroVariance,

    #[error("model file: {0}")]
    ModelFormat(String),

    #[error("bundle manifest field `{field}` is inconsistent: {detail}")]
    InconsistentManifest { field: String, detail: String },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl OfiError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        OfiError::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invalid(what: &'static str, reason: impl Into<String>) -> Self {
        OfiError::InvalidParameter {
            what,
            reason: reason.into(),
        }
    }
}
