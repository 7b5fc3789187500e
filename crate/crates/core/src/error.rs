use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("privacy budget exhausted by `{query_id}`: requested ε={requested_epsilon}, δ={requested_delta}; remaining ε={remaining_epsilon}, δ={remaining_delta}")]
    BudgetExhausted {
        query_id: String,
        requested_epsilon: f64,
        requested_delta: f64,
        remaining_epsilon: f64,
        remaining_delta: f64,
    },

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("schema mismatch: missing column `{column}`")]
    SchemaMismatch { column: String },

    #[error("parse error at row {row}, column `{column}`: {message}")]
    Parse {
        row: usize,
        column: String,
        message: String,
    },

    #[error("record invariant violated at row {row}: {message}")]
    RecordInvariantViolation { row: usize, message: String },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid fraction {0}: must lie in (0, 1]")]
    InvalidFraction(f64),

    #[error("unknown column `{0}`")]
    UnknownColumn(String),

    #[error("column `{0}` still has missing values")]
    MissingValues(String),

    #[error("pipeline is not fitted")]
    NotFitted,

    #[error("training diverged: non-finite loss at iteration {iteration}")]
    NonFiniteLoss { iteration: usize },

    #[error("labels contain a single class")]
    SingleClass,

    #[error("feature width mismatch: model expects {expected}, got {actual}")]
    WidthMismatch { expected: usize, actual: usize },

    #[error("invalid amounts: {0}")]
    InvalidAmounts(String),

    #[error("value {0} out of range [0, 1]")]
    OutOfRange(f64),

    #[error("division by zero: {0}")]
    DivisionByZero(String),

    #[error("unsupported format_version `{found}` (expected `{expected}`)")]
    VersionMismatch { found: String, expected: String },

    #[error("malformed document at `{path}`: {message}")]
    MalformedDocument { path: String, message: String },

    #[error("run {run_id}: {source}")]
    Run {
        run_id: u32,
        #[source]
        source: Box<Error>,
    },

    #[error("io error on {path}: {source}")]
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
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn params(msg: impl Into<String>) -> Self {
        Error::InvalidParams(msg.into())
    }

    /// The innermost error, looking through run tags.
    pub fn root(&self) -> &Error {
        match self {
            Error::Run { source, .. } => source.root(),
            other => other,
        }
    }
}
