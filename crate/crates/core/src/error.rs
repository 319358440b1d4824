use thiserror::Error;

#[derive(Debug, Error)]
pub enum TpadError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("contract violated: {0}")]
    Contract(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("format error: {0}")]
    Format(String),

    #[error("slot {slot} value {value} is out of range (options: {options})")]
    Decode { slot: usize, value: usize, options: usize },

    #[error("non-finite loss in component {component} at step {step}")]
    NonFinite { component: String, step: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = TpadError> = std::result::Result<T, E>;

pub(crate) fn contract(msg: impl Into<String>) -> TpadError {
    TpadError::Contract(msg.into())
}
