use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    #[error("not a metric space candidate: infinite distances")]
    Disconnected,

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("no connected instance after {0} attempts")]
    RetriesExhausted(usize),

    #[error("solver did not converge: {0}")]
    NoConvergence(String),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
