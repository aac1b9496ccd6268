use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the model pipeline.
#[derive(Debug, Error)]
pub enum ScfmError {
    /// A file could not be parsed. `line` is 1-based.
    #[error("{path}: line {line}: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },

    /// A caller supplied an argument outside the operation's domain.
    #[error("invalid argument: {0}")]
    Argument(String),

    /// The input data violate a modelling assumption.
    #[error("data error: {0}")]
    Data(String),

    /// A sampler invariant broke; this indicates a numerical failure.
    #[error("invariant violated at sweep {sweep}: {msg}")]
    Invariant { sweep: u64, msg: String },

    /// A result is mathematically undefined for the given input.
    #[error("undefined result: {0}")]
    Undefined(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl ScfmError {
    pub(crate) fn arg(msg: impl Into<String>) -> Self {
        ScfmError::Argument(msg.into())
    }

    pub(crate) fn data(msg: impl Into<String>) -> Self {
        ScfmError::Data(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        ScfmError::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = ScfmError> = std::result::Result<T, E>;
