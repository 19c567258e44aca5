use thiserror::Error;

/// Errors raised anywhere in the forecasting pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {left:?} vs {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },

    #[error("invalid tensor: {0}")]
    InvalidTensor(String),

    #[error("log of nonpositive value {value} at index {index}")]
    LogNonPositive { value: f64, index: usize },

    #[error("backward requires a scalar loss, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),

    #[error("missing required column `{0}`")]
    MissingColumn(String),

    #[error("invalid data: {0}")]
    InvalidData(String),

    #[error("empty split(s): train={train} val={val} test={test}")]
    EmptySplit { train: usize, val: usize, test: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("horizon {0} is not in the model's horizon set")]
    UnknownHorizon(usize),

    #[error("non-finite gradient in parameter `{0}`")]
    NonFiniteGradient(String),

    #[error("non-finite training loss at iteration {0}")]
    NonFiniteLoss(usize),

    #[error("checkpoint rejected at byte offset {offset}: {reason}")]
    Checkpoint { offset: usize, reason: String },

    #[error("forecast key sets differ; first offending key: {0}")]
    KeyMismatch(String),

    #[error("singular normal equations; use a ridge strength > 0")]
    SingularSystem,

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
