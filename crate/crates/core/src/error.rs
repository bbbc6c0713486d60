use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("ping at t={got} is older than the log tail t={last}")]
    OutOfOrder { last: f64, got: f64 },

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error(
        "inducing covariance is not positive definite (pivot {pivot}, condition estimate {condition_estimate:.3e}, lengthscale {lengthscale:.4})"
    )]
    NotPositiveDefinite {
        pivot: usize,
        condition_estimate: f64,
        lengthscale: f64,
    },

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("time {t} is outside the trajectory history (first pose at {first})")]
    OutOfRange { t: f64, first: f64 },

    #[error("{consecutive} consecutive optimizer steps produced non-finite gradients")]
    NonFiniteGradient { consecutive: u32 },

    #[error("checkpoint: {0}")]
    Checkpoint(String),
}
