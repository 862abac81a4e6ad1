//! Crate-wide error type.

use thiserror::Error;

/// Errors produced anywhere in the solver.
#[derive(Debug, Error)]
pub enum Error {
    /// A function was called with arguments violating its preconditions.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A mesh or configuration file failed to parse.
    #[error("parse error at {path}:{line}: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },

    /// Parsed data violates a structural invariant (non-conforming
    /// connectivity, negative element area, ...).
    #[error("validation error: {0}")]
    Validation(String),

    /// A configuration file is syntactically fine but semantically invalid.
    #[error("configuration error at `{key}`: {msg}")]
    Config { key: String, msg: String },

    /// The model state does not admit the requested operation.
    #[error("invalid state: {0}")]
    InvalidState(String),

    /// A direct factorization found a singular pivot.
    #[error("singular system at pivot {pivot}")]
    Singular { pivot: usize },

    /// An iterative solver ran out of iterations.
    #[error("no convergence after {iterations} iterations (residual {residual:.3e})")]
    NoConvergence { iterations: usize, residual: f64 },

    /// The matrix handed to CG is not positive definite.
    #[error("matrix not positive definite (p'Ap = {curvature:.3e} at iteration {iteration})")]
    NotPositiveDefinite { curvature: f64, iteration: usize },

    /// A field became non-finite during time stepping.
    #[error("non-finite field values at step {step}")]
    NonFinite { step: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn invalid_argument(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    /// True for errors that indicate bad user input rather than a numerical
    /// failure; the CLI maps these to distinct exit codes.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            Error::InvalidArgument(_)
                | Error::Parse { .. }
                | Error::Validation(_)
                | Error::Config { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
