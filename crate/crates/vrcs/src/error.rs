use thiserror::Error;

/// Library-wide error type. Numerical routines return `Numerical` variants,
/// construction and configuration paths return the descriptive ones.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimMismatch { expected: usize, got: usize },

    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),

    #[error("parameter out of range: {0}")]
    InvalidParam(String),

    #[error("matrix is not positive definite ({0})")]
    NotSpd(String),

    #[error("iteration did not converge within its cap ({context}, last estimate {estimate})")]
    NoConvergence { context: &'static str, estimate: f64 },

    #[error("infeasible construction: {0}")]
    Construction(String),

    #[error("data partition error: {0}")]
    Partition(String),

    #[error("dataset error: {0}")]
    Dataset(String),

    #[error("round protocol violation: {0}")]
    Protocol(String),

    #[error("mode error: {0}")]
    Mode(String),

    #[error("subproblem solve failed to certify within {budget} iterations (grad norm {grad_norm:.3e}, target {target:.3e})")]
    Uncertified {
        budget: usize,
        grad_norm: f64,
        target: f64,
    },

    #[error("config error: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
