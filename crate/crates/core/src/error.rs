use thiserror::Error;

use crate::problem::Mode;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid instance: {0}")]
    InvalidInstance(String),

    #[error("topology: {0}")]
    Topology(String),

    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    Dimension {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("invalid hyperparameters: {0}")]
    HyperParams(String),

    #[error("operation requires {expected:?} mode but the swarm runs in {actual:?} mode")]
    Mode { expected: Mode, actual: Mode },

    #[error("divergence at iteration {iteration}, agent {agent}: non-finite {field}")]
    Divergence {
        iteration: u64,
        agent: usize,
        field: &'static str,
    },

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("oracle: {0}")]
    Oracle(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("config: {0}")]
    Config(String),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}
