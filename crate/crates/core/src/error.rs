//! Error type shared by the core modules.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },

    #[error("empty vocabulary in {path}")]
    EmptyVocabulary { path: String },

    #[error("degenerate vector: zero norm")]
    DegenerateVector,

    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },

    #[error("infeasible spec: {0}")]
    InfeasibleSpec(String),

    #[error("oracle undefined: {0}")]
    OracleUndefined(String),

    #[error("empty sentence in example {id}")]
    EmptySentence { id: usize },

    #[error("empty dataset")]
    EmptyDataset,

    #[error("non-finite loss at example {id}")]
    NonFiniteLoss { id: usize },

    #[error("not a checkpoint: {path}")]
    NotACheckpoint { path: String },

    #[error("checkpoint version mismatch in {path}: found {found}, expected {expected}")]
    CheckpointVersion {
        path: String,
        found: u32,
        expected: u32,
    },

    #[error("training aborted at epoch {epoch}, batch {batch}: {source}")]
    TrainingAborted {
        epoch: usize,
        batch: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("invalid config: {0}")]
    InvalidConfig(String),
}

impl Error {
    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn parse(path: impl Into<String>, line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            msg: msg.into(),
        }
    }
}
