//! Error types shared across the crate.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Crate-wide error. Variants map onto the CLI's exit-code classes:
/// config/domain errors, data/format errors, numerical failures, and
/// budget/resource exhaustion.
#[derive(Error, Debug)]
pub enum Error {
    /// An argument violated a documented precondition.
    #[error("domain error: {0}")]
    Domain(String),

    /// Malformed input file or record.
    #[error("format error: {0}")]
    Format(String),

    /// I/O failure while reading or writing artifacts.
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    /// A linear-algebra or optimization step failed numerically.
    #[error("numerical error: {0}")]
    Numerical(String),

    /// Point location or mesh topology failure.
    #[error("geometry error: {0}")]
    Geometry(String),

    /// Work exceeded a configured budget or memory guardrail.
    #[error("resource error: {0}")]
    Resource(String),

    /// Inner optimization failed to converge; carries the last gradient
    /// max-norm for diagnosis.
    #[error("non-convergence after {iters} iterations, gradient max-norm {grad_norm:e}")]
    NonConvergence { iters: usize, grad_norm: f64 },

    /// Hyperparameter exploration ran out of evaluations; carries the best
    /// point seen so far (transformed coordinates and log-posterior value).
    #[error("evaluation budget of {budget} exhausted; best log-posterior {best_value}")]
    EvalBudget {
        budget: usize,
        best_point: Vec<f64>,
        best_value: f64,
    },

    /// A covariate column cannot be standardized.
    #[error("degenerate covariate: {0}")]
    DegenerateCovariate(String),
}

impl Error {
    pub fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub fn format(msg: impl Into<String>) -> Self {
        Error::Format(msg.into())
    }

    pub fn numerical(msg: impl Into<String>) -> Self {
        Error::Numerical(msg.into())
    }

    pub fn geometry(msg: impl Into<String>) -> Self {
        Error::Geometry(msg.into())
    }

    pub fn resource(msg: impl Into<String>) -> Self {
        Error::Resource(msg.into())
    }
}
