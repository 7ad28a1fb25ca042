use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("numerical fault: {0}")]
    NumericalFault(String),

    #[error("related set is empty")]
    EmptyRelatedSet,

    #[error("replay buffer not ready: {have} records, need {need}")]
    NotReady { have: usize, need: usize },

    #[error("invalid action for robot {robot}: task index {task} out of range (M = {n_tasks})")]
    InvalidAction {
        robot: usize,
        task: usize,
        n_tasks: usize,
    },

    #[error("stale tape: recorded against params version {tape}, params are at version {params}")]
    StaleTape { tape: u64, params: u64 },

    #[error("network spec mismatch: {0}")]
    SpecMismatch(String),

    #[error("checkpoint format version {found} is not supported (expected {expected})")]
    CheckpointVersion { found: u32, expected: u32 },

    #[error("corrupt checkpoint header: {0}")]
    CheckpointHeader(String),

    #[error("checkpoint length mismatch: {0}")]
    CheckpointLength(String),

    #[error("learned policy `{0}` requires actor parameters")]
    MissingParams(String),

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
