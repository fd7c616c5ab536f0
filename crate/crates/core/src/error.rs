use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid {field}: {reason}")]
    InvalidParameter { field: String, reason: String },

    #[error("range not covered: requested up to n = {requested}, evaluator covers n <= {limit}")]
    OutOfRange { requested: u64, limit: u64 },

    #[error("memory budget exceeded: need {requested} bytes, allowed {allowed}")]
    BudgetExceeded { requested: u64, allowed: u64 },

    #[error("tolerance not met: achieved error estimate {achieved:e}, requested {requested:e}")]
    ToleranceNotMet { achieved: f64, requested: f64 },

    #[error("malformed sieve file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn invalid(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidParameter { field: field.into(), reason: reason.into() }
    }

    pub(crate) fn prefixed(self, suffix: &str) -> Self {
        match self {
            Error::InvalidParameter { field, reason } => {
                Error::InvalidParameter { field: format!("{field}{suffix}"), reason }
            }
            other => other,
        }
    }
}
