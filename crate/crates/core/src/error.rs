use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid network dimensions: {0}")]
    InvalidDims(String),

    #[error("invalid SNR configuration: {0}")]
    InvalidSnr(String),

    #[error("channel set does not match network dimensions: {0}")]
    ShapeMismatch(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("{what}: {count} candidates exceeds the limit of {limit}")]
    GuardExceeded {
        what: &'static str,
        count: f64,
        limit: f64,
    },

    #[error("waterfilling needs at least one positive gain")]
    DeadChannels,

    #[error("solver: {0}")]
    Solver(#[from] crate::solver::SolverError),

    #[error("configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Toml(#[from] toml::de::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
