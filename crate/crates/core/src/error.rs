use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the recovery pipeline.
#[derive(Debug, Error)]
pub enum PceError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("basis size C({n}, {k}) does not fit in a signed 64-bit integer")]
    Overflow { n: u64, k: u64 },

    #[error("point {point:?} lies outside the domain: {reason}")]
    Domain { point: Vec<f64>, reason: String },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("tridiagonal eigensolver did not converge for eigenvalue {index} after {iterations} sweeps")]
    EigenNoConvergence { index: usize, iterations: usize },

    #[error("ODE integrator step size collapsed to {step:e} at t = {t}")]
    StepSizeCollapse { t: f64, step: f64 },

    #[error("quadrature ladder did not converge: last change {last_change:e} with {nodes} nodes per dimension")]
    QuadratureNoConvergence { last_change: f64, nodes: usize },

    #[error("{path}:{line}: {message}")]
    Parse { path: PathBuf, line: u64, message: String },

    #[error("sample pool has {available} rows but {requested} were requested")]
    PoolExhausted { available: usize, requested: usize },

    #[error("MCMC invariant violated: {0}")]
    Mcmc(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, PceError>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(PceError::InvalidArgument(msg.into()))
}
