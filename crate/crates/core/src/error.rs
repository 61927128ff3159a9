use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid task: {0}")]
    InvalidTask(String),

    #[error("invalid template {template:?}: {reason}")]
    InvalidTemplate { template: String, reason: String },

    #[error("invalid example: {0}")]
    InvalidExample(String),

    #[error("sentence {0} is empty after tokenization")]
    EmptySentence(usize),

    #[error("max_len {max_len} leaves no room for one token per sentence (template overhead {overhead})")]
    MaxLenTooSmall { max_len: usize, overhead: usize },

    #[error("empty corpus")]
    EmptyCorpus,

    #[error("span is empty")]
    EmptySpan,

    #[error("position {position} out of range for prompt of length {len}")]
    PositionOutOfRange { position: usize, len: usize },

    #[error("token position {0} has no word alignment")]
    MissingAlignment(usize),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("non-finite logit at prompt {prompt}, position {position}")]
    NonFiniteLogit { prompt: usize, position: usize },

    #[error("non-finite loss at step {0}")]
    Diverged(usize),

    #[error("invalid lambda weights: {0}")]
    InvalidLambda(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("scorer error: {0}")]
    Scorer(String),

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
