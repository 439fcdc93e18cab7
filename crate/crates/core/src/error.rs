use thiserror::Error;

/// Errors surfaced by the library.
#[derive(Debug, Error)]
pub enum Error {
    /// Inconsistent shapes, invalid hyperparameters, unknown environment names.
    #[error("configuration error: {0}")]
    Config(String),

    /// A state, trace or update became non-finite. Carries enough context to
    /// locate the offending step.
    #[error("numeric fault at step {step} in {context}")]
    NumericFault { step: u64, context: String },

    /// Environment protocol violation (step after terminal, step before reset).
    #[error("environment protocol violation: {0}")]
    Protocol(String),

    /// Snapshot or metric file problems.
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    /// Malformed snapshot container.
    #[error("snapshot format error: {0}")]
    Snapshot(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
}
