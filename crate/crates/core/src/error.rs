use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Crate-wide error type.
///
/// Configuration problems are kept apart from data problems because the CLI
/// maps them to different exit codes.
#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("{path}:{line}: malformed record ({field}): {message}")]
    Record {
        path: PathBuf,
        line: usize,
        field: String,
        message: String,
    },

    #[error("invalid data: {0}")]
    Data(String),

    #[error("serialization error for item {item}: {message}")]
    Serialize { item: String, message: String },

    #[error("parse error at byte {offset}: {message}")]
    Parse { offset: usize, message: String },

    #[error("prompt assembly error: unresolved placeholder {{{0}}}")]
    Placeholder(String),

    #[error("task mismatch: expected {expected}, found {found}")]
    TaskMismatch { expected: String, found: String },

    #[error(transparent)]
    Client(#[from] crate::client::ClientError),

    #[error("stage {stage} failed: {source}")]
    Stage {
        stage: String,
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
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn data(msg: impl Into<String>) -> Self {
        Error::Data(msg.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn stage(stage: &str, source: Error) -> Self {
        Error::Stage {
            stage: stage.to_string(),
            source: Box::new(source),
        }
    }

    /// True for errors that the CLI reports with the configuration exit code.
    pub fn is_config(&self) -> bool {
        match self {
            Error::Config(_) | Error::TaskMismatch { .. } => true,
            Error::Client(e) => e.is_config(),
            Error::Stage { source, .. } => source.is_config(),
            _ => false,
        }
    }
}
