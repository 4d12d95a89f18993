use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid time grid: {0}")]
    InvalidGrid(String),

    #[error("invalid record: {0}")]
    InvalidRecord(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("training diverged: {0}")]
    Divergence(String),

    #[error("client {client} failed in round {round}: {source}")]
    RoundFailure {
        round: usize,
        client: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("scenario {scenario}, seed {seed}: {source}")]
    Run {
        scenario: String,
        seed: u64,
        #[source]
        source: Box<Error>,
    },

    #[error("noise calibration failed: {0}")]
    Calibration(String),

    #[error("schema error: {0}")]
    Schema(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("load failure in {path}: {reason}")]
    Load { path: PathBuf, reason: String },

    #[error("i/o error on {path}: {source}")]
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
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True when the failure stems from user-supplied configuration or
    /// schema rather than from running the experiment.
    pub fn is_config_error(&self) -> bool {
        if let Error::Run { source, .. } = self {
            return source.is_config_error();
        }
        matches!(
            self,
            Error::Config(_) | Error::Schema(_) | Error::InvalidParameter { .. } | Error::InvalidGrid(_)
        )
    }
}
