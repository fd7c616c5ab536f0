use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] divcong::Error),

    #[error("invalid {field}: {reason}")]
    Validation { field: String, reason: String },

    #[error("{0}")]
    Plot(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type CliResult<T> = Result<T, CliError>;

pub fn invalid(field: impl Into<String>, reason: impl Into<String>) -> CliError {
    CliError::Validation { field: field.into(), reason: reason.into() }
}

/// What gets written to `<command>.error.json` and echoed on stderr.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorRecord {
    pub command: String,
    pub kind: String,
    pub field: Option<String>,
    pub message: String,
    pub exit_code: i32,
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation { .. } | CliError::Core(divcong::Error::InvalidParameter { .. }) => 2,
            CliError::Core(divcong::Error::BudgetExceeded { .. }) => 3,
            CliError::Core(divcong::Error::OutOfRange { .. }) => 4,
            _ => 1,
        }
    }

    pub fn record(&self, command: &str) -> ErrorRecord {
        let (kind, field) = match self {
            CliError::Validation { field, .. } => ("validation", Some(field.clone())),
            CliError::Core(e) => match e {
                divcong::Error::InvalidParameter { field, .. } => ("validation", Some(field.clone())),
                divcong::Error::BudgetExceeded { .. } => ("budget", None),
                divcong::Error::OutOfRange { .. } => ("range", None),
                divcong::Error::ToleranceNotMet { .. } => ("tolerance", None),
                divcong::Error::Format(_) => ("format", None),
                divcong::Error::Io(_) => ("io", None),
            },
            CliError::Plot(_) => ("plot", None),
            CliError::Io(_) => ("io", None),
            CliError::Json(_) => ("json", None),
            CliError::Csv(_) => ("csv", None),
        };
        ErrorRecord {
            command: command.to_string(),
            kind: kind.to_string(),
            field,
            message: self.to_string(),
            exit_code: self.exit_code(),
        }
    }
}
