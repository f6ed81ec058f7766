use thiserror::Error;

use crate::coalition::Coalition;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    Validation(String),

    #[error("{what} needs n <= {cap}, got n = {n}")]
    Capacity { what: &'static str, n: usize, cap: usize },

    #[error("value function returned {value} for coalition {coalition}")]
    NonFiniteValue { coalition: Coalition, value: f64 },

    #[error("evaluation failed: {0}")]
    Evaluation(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("transport error: {0}")]
    Transport(String),

    #[error("protocol error: {message} (line: {line:?})")]
    Protocol { message: String, line: String },

    #[error("format error: {0}")]
    Format(String),

    #[error("modality error: {0}")]
    Modality(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("{step}: {source}")]
    Step {
        step: &'static str,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    pub fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io { path: path.as_ref().display().to_string(), source }
    }

    /// Wraps the error with the pipeline step it came from.
    pub fn at(self, step: &'static str) -> Self {
        Error::Step { step, source: Box::new(self) }
    }

    /// Process exit code: 2 validation, 3 transport, 4 evaluation.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Step { source, .. } => source.exit_code(),
            Error::Transport(_) | Error::Protocol { .. } => 3,
            Error::NonFiniteValue { .. } | Error::Evaluation(_) => 4,
            _ => 2,
        }
    }
}
