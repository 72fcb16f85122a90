use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the solver library and the experiment harness.
#[derive(Debug, Error)]
pub enum FocaError {
    #[error("{what} {value} out of range [{lo}, {hi}]")]
    OutOfRange {
        what: &'static str,
        value: f64,
        lo: f64,
        hi: f64,
    },

    #[error("missing history: {0}")]
    MissingHistory(&'static str),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimMismatch { expected: usize, got: usize },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("overflow: {0}")]
    Overflow(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("config error in `{field}`: {message}")]
    Config { field: String, message: String },

    #[error("format error in {context}: {message}")]
    Format { context: String, message: String },

    #[error("training did not converge: held-out mse {mse:.6} above threshold {threshold:.6} after {steps} steps")]
    NonConvergence {
        mse: f64,
        threshold: f64,
        steps: usize,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl FocaError {
    pub(crate) fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        FocaError::Config {
            field: field.into(),
            message: message.into(),
        }
    }

    pub(crate) fn format(context: impl Into<String>, message: impl Into<String>) -> Self {
        FocaError::Format {
            context: context.into(),
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        FocaError::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, FocaError>;
