use std::path::PathBuf;

use thiserror::Error;

use crate::stepper::TrajectoryRecord;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("shape mismatch: expected {expected}, got {got}")]
    Shape { expected: String, got: String },

    #[error("configuration error: {0}")]
    Config(String),

    /// Scenario validation collects every problem rather than stopping at the first.
    #[error("invalid scenario:\n{}", .0.join("\n"))]
    Validation(Vec<String>),

    #[error("{what} did not converge after {iterations} iterations (residual {residual:.3e})")]
    NonConvergence {
        what: &'static str,
        iterations: usize,
        residual: f64,
    },

    #[error("internal invariant violated: {0}")]
    Invariant(String),

    #[error("step {step} failed: {source}")]
    StepFailed {
        step: usize,
        partial: Box<TrajectoryRecord>,
        #[source]
        source: Box<Error>,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by the numerics rather than by the inputs.
    pub fn is_numerical(&self) -> bool {
        match self {
            Error::NonConvergence { .. } | Error::Invariant(_) => true,
            Error::StepFailed { source, .. } => source.is_numerical(),
            _ => false,
        }
    }
}
