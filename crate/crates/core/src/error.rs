use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("operator is singular or numerically singular ({0})")]
    SingularOperator(String),

    #[error("rank deficient: requested {requested}, achieved {achieved}")]
    RankDeficient { requested: usize, achieved: usize },

    #[error("dense SVD failed to converge")]
    SvdFailure,

    #[error("difference order {order} too high for {intervals} intervals")]
    OrderTooHigh { order: usize, intervals: usize },

    #[error("problem size {size} exceeds dense limit {limit}")]
    ProblemTooLarge { size: usize, limit: usize },

    #[error("observation Gram matrix is numerically singular")]
    SingularTheta,

    #[error("fixed-point iteration diverged at iteration {iteration}")]
    Diverged { iteration: usize },

    #[error("basis exhausted: n = {n} but only {available} singular triplets stored")]
    RankExhausted { n: usize, available: usize },

    #[error("invalid configuration at `{key}`: {reason}")]
    ConfigInvalid { key: String, reason: String },

    #[error("malformed basis file: {0}")]
    BadFormat(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn config(key: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::ConfigInvalid {
            key: key.into(),
            reason: reason.into(),
        }
    }
}

pub(crate) fn check_dim(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, found })
    }
}
