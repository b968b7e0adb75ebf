use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("reward {0} outside [-1, 1]")]
    RewardOutOfRange(f64),

    #[error("arm {arm} out of range for {n_arms} arms")]
    ArmOutOfRange { arm: usize, n_arms: usize },

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("{kind} gain requires {required} training mode, run is in {actual} mode")]
    ModeMismatch {
        kind: &'static str,
        required: &'static str,
        actual: &'static str,
    },

    #[error("missing input: {0}")]
    Missing(String),

    #[error("task {task} outside the curriculum")]
    TaskOutOfRange { task: String },

    #[error("extra sample from the wrong source: {0}")]
    WrongSource(String),

    #[error("corpus error: {0}")]
    Corpus(String),

    #[error("malformed log {path}:{line}: {msg}")]
    Log {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Errors caused by numerical divergence rather than bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(self, Error::NonFinite(_))
    }

    pub fn is_config(&self) -> bool {
        matches!(
            self,
            Error::Config(_) | Error::ModeMismatch { .. } | Error::TaskOutOfRange { .. }
        )
    }
}
