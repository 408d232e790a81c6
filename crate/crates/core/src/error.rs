use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Coarse classification used by front ends to pick an exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    /// Bad input files, parameters or configuration.
    Config,
    /// A generator would exceed its point budget.
    Budget,
    /// Numerically degenerate input (zero periodogram, too few points, ...).
    Numeric,
    /// Operating-system I/O failure.
    Io,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("line {line}: point ({x}, {y}) lies outside the window")]
    OutOfWindow { line: usize, x: f64, y: f64 },

    #[error("invalid window: {0}")]
    InvalidWindow(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("expected {expected:.0} points exceeds the point budget of {budget}")]
    BudgetExceeded { expected: f64, budget: usize },

    #[error(
        "zero local periodogram at location #{location} ({zx}, {zy}), frequency #{frequency} \
         ({wx}, {wy}); the logarithm is undefined. Increase h or rho, or use fewer locations"
    )]
    ZeroPeriodogram {
        location: usize,
        frequency: usize,
        zx: f64,
        zy: f64,
        wx: f64,
        wy: f64,
    },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("quadrature did not converge: {0}")]
    Quadrature(String),

    #[error("{path}: {source}")]
    File {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Parse { .. }
            | Error::OutOfWindow { .. }
            | Error::InvalidWindow(_)
            | Error::InvalidParameter(_)
            | Error::Json(_) => ErrorKind::Config,
            Error::BudgetExceeded { .. } => ErrorKind::Budget,
            Error::ZeroPeriodogram { .. } | Error::Degenerate(_) | Error::Quadrature(_) => {
                ErrorKind::Numeric
            }
            Error::File { .. } | Error::Io(_) => ErrorKind::Io,
        }
    }

    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }
}
