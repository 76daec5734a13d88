use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// Invalid system or experiment configuration. `field` is a dotted path
    /// into the JSON document (`base.probabilities`, `task_params.lambda`, ...).
    #[error("configuration error at `{field}`: {message}")]
    Config { field: String, message: String },

    #[error("resource limit exceeded: {0}")]
    Resource(String),

    /// Caller violated an operation's precondition (wrong dimension, ...).
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("unsupported operation: {0}")]
    Unsupported(String),

    #[error("numeric range error: {0}")]
    Range(String),
}

impl Error {
    pub fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            message: message.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
