use thiserror::Error;

/// Errors raised by the simulator, the learners and the experiment front-end.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument falls outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A configuration value violates an invariant. `key` is the dotted path of the offending entry.
    #[error("config error at `{key}`: {message}")]
    Config { key: String, message: String },

    /// Tensor or vector shapes disagree.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// A caller broke an input contract (for example a metric outside [0, 1]).
    #[error("contract violation: {0}")]
    Contract(String),

    /// An operation is not defined for the given inputs (e.g. KL across different supports).
    #[error("inapplicable: {0}")]
    Inapplicable(String),

    /// A non-finite value appeared during training.
    #[error("numerical divergence: {0}")]
    Divergence(String),

    /// Malformed checkpoint or weight file.
    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            message: message.into(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
