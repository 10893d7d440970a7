use thiserror::Error;

use crate::integrate::Trajectory;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// State reached before an integration aborted.
#[derive(Debug, Clone)]
pub struct IntegrationFailure {
    pub reason: String,
    pub partial: Trajectory,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    Input(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("numerical error: {0}")]
    Numerical(String),

    #[error("certification failed at stage `{stage}`: {message}")]
    Certification { stage: String, message: String },

    #[error("integration failed: {}", .0.reason)]
    Integration(Box<IntegrationFailure>),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn input(msg: impl Into<String>) -> Self {
        Error::Input(msg.into())
    }

    pub(crate) fn certification(stage: &str, msg: impl Into<String>) -> Self {
        Error::Certification {
            stage: stage.to_string(),
            message: msg.into(),
        }
    }

    pub(crate) fn check_dim(expected: usize, got: usize) -> Result<()> {
        if expected == got {
            Ok(())
        } else {
            Err(Error::Dimension { expected, got })
        }
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        }
    }
}
