//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("log format error: {0}")]
    Format(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("too few sessions: need {need}, got {got}")]
    TooFewSessions { need: usize, got: usize },

    #[error("state coverage error: {0}")]
    StateCoverage(String),

    #[error("singular within-group covariance; prune constant or collinear columns")]
    SingularCovariance,

    #[error("training error: {0}")]
    Training(String),

    #[error("encoding error: expected dimension {expected}, got {got}")]
    Encoding { expected: usize, got: usize },

    #[error("fold split error: {0}")]
    Split(String),
}

pub type Result<T> = std::result::Result<T, Error>;
