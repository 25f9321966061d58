use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("sampler accepted no proposals after burn-in")]
    SamplerDegenerate,

    #[error("fewer than two distinct trajectories available for a query")]
    DegenerateQuery,

    #[error("every environment evaluated during design produced a degenerate query")]
    DegenerateDesign,

    #[error("kernel matrix is not positive definite even with jitter {0:e}")]
    IllConditioned(f64),

    #[error("no trajectory reaches the goal within the horizon of {0} steps")]
    NoPath(usize),

    #[error("correlation undefined: reward series has zero variance")]
    UndefinedCorrelation,

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
