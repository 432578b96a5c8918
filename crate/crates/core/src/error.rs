use thiserror::Error;

/// Errors surfaced by the pipeline.
#[derive(Debug, Error)]
pub enum Error {
    /// A dataset row (manifest or feature table) could not be ingested.
    /// `row` is the 1-based data row, excluding the header.
    #[error("ingest error at row {row}: {message}")]
    Ingest { row: usize, message: String },

    /// Input data or configuration violates a documented precondition.
    #[error("validation error: {0}")]
    Validation(String),

    /// A network or transform specification is structurally invalid.
    #[error("spec error: {0}")]
    Spec(String),

    /// Training diverged or produced non-finite state.
    #[error("training error at epoch {epoch}, batch {batch}: {message}")]
    Training {
        epoch: usize,
        batch: usize,
        message: String,
    },

    /// A serialized artifact (model or transform container) is malformed.
    #[error("artifact error: {0}")]
    Artifact(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("table error: {0}")]
    Csv(#[from] csv::Error),

    #[error("image error: {0}")]
    Image(#[from] image::ImageError),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Ingest error helper with a 1-based data row.
    pub fn ingest(row: usize, message: impl Into<String>) -> Self {
        Error::Ingest {
            row,
            message: message.into(),
        }
    }

    pub fn validation(message: impl Into<String>) -> Self {
        Error::Validation(message.into())
    }

    pub fn spec(message: impl Into<String>) -> Self {
        Error::Spec(message.into())
    }

    pub fn artifact(message: impl Into<String>) -> Self {
        Error::Artifact(message.into())
    }
}
