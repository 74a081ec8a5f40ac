//! Error type shared across the crate.
//!
//! Variants are grouped by how the CLI reports them: configuration problems,
//! data problems, and numeric failures each map to their own exit code.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {context}: expected {expected}, got {actual}")]
    ShapeMismatch {
        context: &'static str,
        expected: String,
        actual: String,
    },

    #[error("{name} = {value} is outside {expected}")]
    Domain {
        name: &'static str,
        value: f64,
        expected: &'static str,
    },

    #[error("precondition not met: {0}")]
    Precondition(String),

    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("metric undefined: {0}")]
    MetricUndefined(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

/// Rejects values outside the closed unit interval, NaN included.
pub(crate) fn check_unit(name: &'static str, value: f64) -> Result<()> {
    if value.is_nan() || !(0.0..=1.0).contains(&value) {
        return Err(Error::Domain {
            name,
            value,
            expected: "[0, 1]",
        });
    }
    Ok(())
}

impl Error {
    /// Process exit code the CLI uses for this error class.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Domain { .. } => 2,
            Error::Parse { .. } | Error::Io(_) | Error::ShapeMismatch { .. } => 3,
            Error::NonFinite(_) | Error::MetricUndefined(_) => 4,
            Error::Precondition(_) | Error::Invariant(_) => 4,
        }
    }
}
