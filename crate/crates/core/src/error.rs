use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("empty sample")]
    EmptySample,

    #[error("sample contains a non-finite value at position {index}")]
    NonFinite { index: usize },

    #[error("order statistic {k} out of range for a sample of size {n}")]
    IndexOutOfRange { k: usize, n: usize },

    #[error("invalid level {0}: must lie strictly between 0 and 1")]
    InvalidLevel(f64),

    #[error("dataset too small: need at least {need} records, have {have}")]
    DatasetTooSmall { need: usize, have: usize },

    #[error("cannot form {blocks} blocks from {available} indices")]
    BlockCountTooLarge { blocks: usize, available: usize },

    #[error("wrong task: {0}")]
    WrongTask(String),

    #[error("degenerate labels: {0}")]
    DegenerateLabels(String),

    #[error("shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: usize, got: usize },

    #[error("empty record block")]
    EmptyBlock,

    #[error("full conformal oracle is desk-scale only: {0}")]
    GridTooLarge(String),

    #[error("unknown learner `{0}`")]
    UnknownLearner(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid split plan: {0}")]
    InvalidPlan(String),

    #[error("replication {index}: {source}")]
    Replication { index: usize, source: Box<Error> },

    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
