use thiserror::Error;

/// Errors raised across the library.
#[derive(Debug, Error)]
pub enum Error {
    /// Invalid configuration or contract violation in user input.
    #[error("configuration error: {0}")]
    Config(String),

    /// API misuse: wrong shapes, missing caches, empty inputs.
    #[error("usage error: {0}")]
    Usage(String),

    /// Train-mode batch normalization needs at least two rows.
    #[error("batch-size error: train-mode batch normalization needs at least 2 rows, got {0}")]
    BatchSize(usize),

    /// Malformed input file.
    #[error("ingestion error at row {row}, column {column}: {message}")]
    Ingest {
        row: usize,
        column: String,
        message: String,
    },

    /// Factorization or other numerical failure.
    #[error("numerical error: {0}")]
    Numerical(String),

    /// Non-finite loss during training.
    #[error("training diverged at epoch {epoch}, batch {batch}: loss = {loss}")]
    Divergence {
        epoch: usize,
        batch: usize,
        loss: f64,
    },

    #[error("{context}: {source}")]
    Stage {
        context: String,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn usage(msg: impl Into<String>) -> Self {
        Error::Usage(msg.into())
    }

    /// Wraps the error with the name of the pipeline stage that produced it.
    pub fn in_stage(self, context: impl Into<String>) -> Self {
        Error::Stage {
            context: context.into(),
            source: Box::new(self),
        }
    }

    /// The innermost error, skipping stage wrappers.
    pub fn root(&self) -> &Error {
        match self {
            Error::Stage { source, .. } => source.root(),
            other => other,
        }
    }

    /// True for failures caused by numerics rather than by user input.
    pub fn is_numerical(&self) -> bool {
        matches!(self.root(), Error::Numerical(_) | Error::Divergence { .. })
    }
}

pub type Result<T> = std::result::Result<T, Error>;
