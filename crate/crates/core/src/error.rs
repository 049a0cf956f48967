use thiserror::Error;

use crate::networks::AssumptionReport;

pub type Result<T> = std::result::Result<T, Error>;

/// Parameter-domain violation: a value is outside the support the model
/// requires (simplex, open interval, positivity).
#[derive(Debug, Clone, Error)]
#[error("constraint violated: {0}")]
pub struct ConstraintError(pub String);

/// Coarse classification used by the CLI to pick an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCategory {
    Validation,
    Numerical,
    Io,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Constraint(#[from] ConstraintError),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("relational matrix is singular at period {t}{}", iteration.map(|i| format!(" (draw {i})")).unwrap_or_default())]
    SingularRelationalMatrix { t: usize, iteration: Option<usize> },

    #[error("spectral radius {radius} >= 1 at period {t}: series expansion diverges")]
    Divergence { t: usize, radius: f64 },

    #[error("power iteration did not converge within {iterations} iterations (last delta {last_delta:e})")]
    NonConvergence {
        iterations: usize,
        last_delta: f64,
        last_iterate: Vec<f64>,
    },

    #[error("network assumptions violated:\n{0}")]
    AssumptionsViolated(AssumptionReport),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("{context}: {count} of {total} rows malformed (limit 10%)")]
    TooManyMalformedRows {
        context: String,
        count: usize,
        total: usize,
    },

    #[error("calendar gaps in monthly data: missing {0:?}")]
    CalendarGaps(Vec<String>),

    #[error("too few draws: have {have}, need at least {need}")]
    TooFewDraws { have: usize, need: usize },

    #[error("undefined correlation: series '{0}' has zero variance")]
    ZeroVariance(String),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn category(&self) -> ErrorCategory {
        match self {
            Error::Constraint(_)
            | Error::ShapeMismatch(_)
            | Error::AssumptionsViolated(_)
            | Error::Config(_)
            | Error::TooManyMalformedRows { .. }
            | Error::CalendarGaps(_)
            | Error::TooFewDraws { .. }
            | Error::ZeroVariance(_) => ErrorCategory::Validation,
            Error::SingularRelationalMatrix { .. }
            | Error::Divergence { .. }
            | Error::NonConvergence { .. }
            | Error::Numerical(_) => ErrorCategory::Numerical,
            Error::Csv(_) | Error::Io(_) | Error::Json(_) => ErrorCategory::Io,
        }
    }

    pub(crate) fn constraint(msg: impl Into<String>) -> Self {
        Error::Constraint(ConstraintError(msg.into()))
    }
}
