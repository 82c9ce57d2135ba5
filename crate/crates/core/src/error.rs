use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix contains a non-finite entry at ({row}, {col})")]
    NonFinite { row: usize, col: usize },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    Dimension { expected: usize, actual: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("singular reduced system")]
    Singular,

    #[error("Newton iteration did not converge at step {step} (residual norm {residual_norm:.3e})")]
    NewtonFailed { step: usize, residual_norm: f64 },

    #[error(
        "refinement exceeded {rounds} rounds at step {step} without meeting tolerance \
         (full residual {residual_norm:.3e}, basis dimension {basis_dim})"
    )]
    RefineLimit {
        step: usize,
        rounds: usize,
        residual_norm: f64,
        basis_dim: usize,
    },

    #[error("invalid tree: {0}")]
    InvalidTree(String),

    #[error("malformed file {path}: {reason}")]
    Format { path: PathBuf, reason: String },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, reason: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            reason: reason.into(),
        }
    }

    /// True for failures of a numerical solver, as opposed to bad input.
    pub fn is_solver_failure(&self) -> bool {
        matches!(
            self,
            Error::Singular | Error::NewtonFailed { .. } | Error::RefineLimit { .. }
        )
    }
}
