use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Input outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// Invalid model or experiment parameters.
    #[error("configuration error: {0}")]
    Config(String),

    /// An operation was called without its required inputs.
    #[error("usage error: {0}")]
    Usage(String),

    /// The model hit its step cap before the stopping time was reached.
    #[error("path overflow: step cap {cap} reached")]
    PathOverflow { cap: u64 },

    /// The fractional correction fell outside (0, 1].
    #[error("degenerate start: gamma = {gamma} (v_before = {v_before}, sigma_sq = {sigma_sq}, n = {level})")]
    DegenerateStart {
        gamma: f64,
        v_before: f64,
        sigma_sq: f64,
        level: f64,
    },

    /// A pathwise model hypothesis was violated.
    #[error("model invalid: {0}")]
    ModelInvalid(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}
