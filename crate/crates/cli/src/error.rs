use std::path::Path;

use stocknet::ErrorKind;
use thiserror::Error;

/// Process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum ExitStatus {
    Success = 0,
    InputError = 2,
    NumericalFailure = 3,
    InvariantViolation = 4,
    OutputError = 5,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("[{stage}] {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: stocknet::Error,
    },

    #[error("[{stage}] cannot read {path}: {source}")]
    Read {
        stage: &'static str,
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("[{stage}] cannot write {path}: {message}")]
    Write {
        stage: &'static str,
        path: String,
        message: String,
    },

    #[error("[{stage}] {message}")]
    Usage {
        stage: &'static str,
        message: String,
    },
}

impl CliError {
    pub fn stage(stage: &'static str) -> impl Fn(stocknet::Error) -> CliError {
        move |source| CliError::Stage { stage, source }
    }

    pub fn read<'a>(
        stage: &'static str,
        path: &'a Path,
    ) -> impl Fn(std::io::Error) -> CliError + 'a {
        move |source| CliError::Read {
            stage,
            path: path.display().to_string(),
            source,
        }
    }

    pub fn exit_status(&self) -> ExitStatus {
        match self {
            CliError::Stage { source, .. } => match source.kind() {
                ErrorKind::Input => ExitStatus::InputError,
                ErrorKind::Numerical => ExitStatus::NumericalFailure,
                ErrorKind::Invariant => ExitStatus::InvariantViolation,
            },
            CliError::Read { .. } | CliError::Usage { .. } => ExitStatus::InputError,
            CliError::Write { .. } => ExitStatus::OutputError,
        }
    }
}
