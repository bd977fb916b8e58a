use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid hyperparameters, incompatible model kind, impossible split request.
    #[error("configuration error: {0}")]
    Config(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    /// Labels outside {0, 1} and similar caller mistakes.
    #[error("invalid input: {0}")]
    Input(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("evaluation error: {0}")]
    Eval(String),

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: u64,
        msg: String,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures the CLI maps to the "usage/config" exit code.
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            Error::Config(_) | Error::Input(_) | Error::Parse { .. } | Error::Json(_)
        ) || matches!(self, Error::Io { source, .. } if source.kind() == std::io::ErrorKind::NotFound)
    }
}
