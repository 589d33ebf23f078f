use std::path::{Path, PathBuf};

use eegtcn_core::runtime::{FormatError, RuntimeError};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{}: {reason}", path.display())]
    Input { path: PathBuf, reason: String },
    #[error("{0}")]
    Invalid(String),
    #[error("geometry mismatch: {0}")]
    Geometry(String),
    #[error("{0}")]
    MissingCompanion(String),
    #[error("{0}")]
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Input { .. } | CliError::Invalid(_) => 2,
            CliError::Geometry(_) => 3,
            CliError::MissingCompanion(_) => 4,
            CliError::Internal(_) => 1,
        }
    }

    pub fn input(path: &Path, reason: impl ToString) -> Self {
        CliError::Input {
            path: path.to_path_buf(),
            reason: reason.to_string(),
        }
    }

    pub fn format(path: &Path, e: FormatError) -> Self {
        Self::input(path, e)
    }
}

impl From<RuntimeError> for CliError {
    fn from(e: RuntimeError) -> Self {
        match e {
            RuntimeError::Geometry {
                expected_channels,
                expected_samples,
                found_channels,
                found_samples,
            } => CliError::Geometry(format!(
                "expected C={expected_channels} T={expected_samples}, found C={found_channels} T={found_samples}"
            )),
            RuntimeError::EmptyCalibration | RuntimeError::EmptyTrialSet | RuntimeError::InvalidTrials(_) => {
                CliError::Invalid(e.to_string())
            }
            other => CliError::Internal(other.to_string()),
        }
    }
}
