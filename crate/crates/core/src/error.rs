use thiserror::Error;

/// Errors raised by problem construction and the solvers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error(
        "ill-conditioned shape problem (condition number of H = {condition:e}); \
         increase the shape regularizer lambda"
    )]
    IllConditioned { condition: f64 },

    #[error("malformed JSON at line {line}, column {column} (byte offset {offset}): {message}")]
    Json {
        line: usize,
        column: usize,
        offset: usize,
        message: String,
    },

    #[error("no inliers: every keypoint weight was driven to zero")]
    NoInliers,
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidInput(msg.into())
}
