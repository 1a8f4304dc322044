use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Errors raised anywhere in the training and analysis pipeline.
///
/// The variants are grouped so a command-line front end can map them onto
/// stable exit codes: configuration problems, ingestion problems, and
/// numerical aborts during training.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch at layer {layer}: expected input width {expected}, got {actual}")]
    Dimension {
        layer: usize,
        expected: usize,
        actual: usize,
    },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("non-finite gradient for parameter {param}")]
    NonFiniteGradient { param: usize },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("ingestion error{}: {message}", location(.row, .column))]
    Ingestion {
        row: Option<usize>,
        column: Option<String>,
        message: String,
    },

    #[error(
        "non-finite loss at step {step}; last good checkpoint: {}",
        .last_checkpoint.as_deref().unwrap_or("none")
    )]
    NumericalAbort {
        step: u64,
        last_checkpoint: Option<String>,
    },

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

fn location(row: &Option<usize>, column: &Option<String>) -> String {
    match (row, column) {
        (Some(r), Some(c)) => format!(" (row {r}, column `{c}`)"),
        (Some(r), None) => format!(" (row {r})"),
        (None, Some(c)) => format!(" (column `{c}`)"),
        (None, None) => String::new(),
    }
}

impl Error {
    pub(crate) fn ingestion(row: Option<usize>, column: Option<&str>, message: impl Into<String>) -> Self {
        Error::Ingestion {
            row,
            column: column.map(str::to_owned),
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
