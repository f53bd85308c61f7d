use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Malformed serialization; `offset` is the byte offset into the input.
    #[error("parse error at byte {offset}: {message}")]
    Parse { offset: usize, message: String },

    #[error("schema error in field `{field}`: {message}")]
    Schema { field: String, message: String },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("label error: {0}")]
    Label(String),

    #[error("shape mismatch: expected {expected}, found {found}")]
    Shape { expected: usize, found: usize },

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("lookup error: {0}")]
    Lookup(String),

    #[error("training error: {0}")]
    Training(String),

    /// Loss or gradients went non-finite. The last finite state, if any, is kept.
    #[error("non-finite values during training at epoch {epoch}, step {step}: {message}")]
    NonFinite {
        epoch: usize,
        step: usize,
        message: String,
        checkpoint: Option<Box<crate::estimators::neural::NeuralModel>>,
    },

    #[error("artifact error ({stage}): {message}")]
    Artifact { stage: String, message: String },

    #[error("leakage detected: {0}")]
    Leakage(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn argument(msg: impl Into<String>) -> Self {
        Error::Argument(msg.into())
    }

    pub(crate) fn schema(field: impl Into<String>, msg: impl Into<String>) -> Self {
        Error::Schema {
            field: field.into(),
            message: msg.into(),
        }
    }
}
