use std::fmt;

use confperf::Error;

/// Command failure, mapped to the process exit code.
#[derive(Debug)]
pub enum CliError {
    /// Bad flags, config values or names: exit 1.
    Config(String),
    /// Missing or malformed input, or unwritable output: exit 2.
    Data(String),
    /// Anything else: exit 3.
    Internal(String),
    /// An audit ran but at least one check failed: exit 4.
    AuditFailed(String),
}

pub type CliResult<T> = Result<T, CliError>;

impl CliError {
    pub fn code(&self) -> i32 {
        match self {
            CliError::Config(_) => 1,
            CliError::Data(_) => 2,
            CliError::Internal(_) => 3,
            CliError::AuditFailed(_) => 4,
        }
    }

    /// Library errors raised while loading input.
    pub fn data(e: Error) -> Self {
        CliError::Data(e.to_string())
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Data(m) => write!(f, "data error: {m}"),
            CliError::Internal(m) => write!(f, "internal error: {m}"),
            CliError::AuditFailed(m) => write!(f, "audit failed: {m}"),
        }
    }
}

fn root(e: &Error) -> &Error {
    match e {
        Error::Replication { source, .. } => root(source),
        other => other,
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let msg = e.to_string();
        match root(&e) {
            Error::InvalidLevel(_)
            | Error::UnknownLearner(_)
            | Error::InvalidParameter(_)
            | Error::DatasetTooSmall { .. }
            | Error::BlockCountTooLarge { .. }
            | Error::WrongTask(_)
            | Error::DegenerateLabels(_)
            | Error::GridTooLarge(_) => CliError::Config(msg),
            Error::Io(_) | Error::Csv(_) | Error::Parse { .. } | Error::ShapeMismatch { .. } => CliError::Data(msg),
            _ => CliError::Internal(msg),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Internal(e.to_string())
    }
}
