//! Error split that drives the process exit code: configuration and input
//! problems exit 1, failures during execution exit 2.

use std::fmt;

use bat_forge_core::Error as CoreError;

#[derive(Debug)]
pub enum CliError {
    Validation(String),
    Runtime(String),
}

impl CliError {
    pub fn validation(msg: impl Into<String>) -> Self {
        CliError::Validation(msg.into())
    }

    pub fn runtime(msg: impl Into<String>) -> Self {
        CliError::Runtime(msg.into())
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Runtime(_) => 2,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Validation(msg) | CliError::Runtime(msg) => f.write_str(msg),
        }
    }
}

/// Reading inputs and checking configuration is validation; everything
/// that can only break once the pipeline is running is runtime. Output
/// write failures are mapped at the write sites.
impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        match &e {
            CoreError::Io { .. }
            | CoreError::Parse { .. }
            | CoreError::EmptyVocabulary { .. }
            | CoreError::DimensionMismatch { .. }
            | CoreError::InfeasibleSpec(_)
            | CoreError::EmptyDataset
            | CoreError::NotACheckpoint { .. }
            | CoreError::CheckpointVersion { .. }
            | CoreError::ShapeMismatch(_)
            | CoreError::InvalidConfig(_) => CliError::Validation(e.to_string()),
            CoreError::DegenerateVector
            | CoreError::OracleUndefined(_)
            | CoreError::EmptySentence { .. }
            | CoreError::NonFiniteLoss { .. }
            | CoreError::TrainingAborted { .. } => CliError::Runtime(e.to_string()),
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
