use thiserror::Error;

/// Errors raised by the identification, optimization and simulation layers.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum PcacError {
    #[error("dimension mismatch in {what}: expected {expected}, got {got}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("root finder did not converge: {0}")]
    NoConvergence(String),

    #[error("covariance lost positive definiteness at step {step}")]
    NotPositiveDefinite { step: usize },

    #[error("ill-conditioned Riccati solve (condition estimate {cond:e})")]
    IllConditioned { cond: f64 },

    #[error("singular error covariance in forgetting statistic")]
    SingularCovariance,

    #[error("plant state blew up at t = {t} s (|state| = {magnitude:e})")]
    PlantBlowUp { t: f64, magnitude: f64 },

    #[error("empty signal")]
    EmptySignal,
}

pub type Result<T> = std::result::Result<T, PcacError>;

pub(crate) fn check_len(what: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(PcacError::DimensionMismatch {
            what,
            expected,
            got,
        })
    }
}
