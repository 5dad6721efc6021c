use thiserror::Error;

/// Coarse classification used by callers that have to pick an exit code:
/// bad inputs are the operator's problem, run failures are the harness's.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Validation,
    Run,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error: {0}")]
    Parse(String),

    #[error("validation error{}: {message}", scenario.as_ref().map(|s| format!(" in scenario {s}")).unwrap_or_default())]
    Validation {
        scenario: Option<String>,
        message: String,
    },

    #[error("unsupported schema_version {found} (expected {expected})")]
    SchemaVersion { expected: u32, found: u32 },

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("world fixture {0:?} not found")]
    FixtureResolution(String),

    #[error("agent failure: {0}")]
    Agent(String),

    #[error("cassette miss: {0}")]
    CassetteMiss(String),

    #[error("endpoint error: {0}")]
    Endpoint(String),

    #[error("missing measurement for weighted scenario {0:?}")]
    MissingMeasurement(String),

    #[error("suite mismatch: {0}")]
    SuiteMismatch(String),

    #[error("attribution called on a non-violated trajectory for scenario {0:?}")]
    NotViolated(String),

    #[error("{0}")]
    Internal(String),
}

impl Error {
    pub fn validation(scenario: Option<&str>, message: impl Into<String>) -> Self {
        Error::Validation {
            scenario: scenario.map(str::to_owned),
            message: message.into(),
        }
    }

    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Parse(_)
            | Error::Validation { .. }
            | Error::SchemaVersion { .. }
            | Error::SuiteMismatch(_)
            | Error::MissingMeasurement(_) => ErrorKind::Validation,
            _ => ErrorKind::Run,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
