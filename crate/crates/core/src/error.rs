use thiserror::Error;

/// Errors surfaced by the generator, the training core and the harness.
#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("parse error at byte {offset}: {message}")]
    Parse { offset: usize, message: String },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("training error at batch {batch}: {message}")]
    Training { batch: usize, message: String },

    /// A loss could not be evaluated on the given batch (e.g. a single-class
    /// batch for the triplet loss). Callers usually skip the batch.
    #[error("degenerate batch: {0}")]
    DegenerateBatch(String),

    #[error("run failed: {0}")]
    Run(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
