use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Input that violates a documented contract (bad box, unknown field, ...).
    #[error("validation error: {0}")]
    Validation(String),

    #[error("word {read_index} of document {doc_id} tokenizes to {pieces} pieces, more than a window holds ({capacity})")]
    WordTooLong {
        doc_id: String,
        read_index: usize,
        pieces: usize,
        capacity: usize,
    },

    #[error("sequence contains no parsable numbers")]
    NoNumbers,

    #[error("batch has no positions contributing to the loss")]
    EmptyLoss,

    #[error("loss became non-finite at step {step} ({task})")]
    NonFiniteLoss { step: usize, task: String },

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Whether the error stems from invalid user input rather than a runtime failure.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Validation(_) | Error::Format(_) | Error::Json(_) | Error::WordTooLong { .. }
        )
    }
}
