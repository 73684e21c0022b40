use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Coarse classification used by front ends to pick exit codes and HTTP statuses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Validation,
    NotFound,
    Conflict,
    Io,
    Numeric,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Param(String),

    #[error("not found: {0}")]
    NotFound(String),

    #[error("format error: {0}")]
    Format(String),

    #[error("validation error: {0}")]
    Validation(String),

    #[error("refresh error: {0}")]
    Refresh(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("annotation budget exhausted ({spent:.1} s of {budget:.1} s)")]
    BudgetExhausted { spent: f64, budget: f64 },

    #[error("optimization diverged at iteration {iteration}")]
    Diverged { iteration: usize, trace: Vec<(usize, f64)> },

    #[error("not ready: {0}")]
    NotReady(String),

    #[error("operation cancelled")]
    Cancelled,

    #[error("i/o error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Param(_) | Error::Format(_) | Error::Validation(_) | Error::Refresh(_) | Error::Json(_) => {
                ErrorKind::Validation
            }
            Error::NotFound(_) => ErrorKind::NotFound,
            Error::BudgetExhausted { .. } | Error::NotReady(_) | Error::Cancelled => ErrorKind::Conflict,
            Error::Io { .. } => ErrorKind::Io,
            Error::Degenerate(_) | Error::Diverged { .. } => ErrorKind::Numeric,
        }
    }

    /// Short stable tag for machine-readable error output.
    pub fn tag(&self) -> &'static str {
        match self {
            Error::Param(_) => "parameter",
            Error::NotFound(_) => "not_found",
            Error::Format(_) => "format",
            Error::Validation(_) => "validation",
            Error::Refresh(_) => "refresh",
            Error::Degenerate(_) => "degenerate",
            Error::BudgetExhausted { .. } => "budget_exhausted",
            Error::Diverged { .. } => "diverged",
            Error::NotReady(_) => "not_ready",
            Error::Cancelled => "cancelled",
            Error::Io { .. } => "io",
            Error::Json(_) => "json",
        }
    }
}
