use thiserror::Error;

use crate::wdp::WdpSolution;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// User input that breaks a model invariant. `field` is a dotted path
    /// into the offending structure, e.g. `sellers[1].round_capacity`.
    #[error("invalid {field}: {message}")]
    Validation { field: String, message: String },

    /// A mechanism produced an outcome the ledger refuses to apply.
    /// This is a bug in the mechanism, never a user error.
    #[error("ledger invariant violated: {0}")]
    Invariant(String),

    #[error("search budget of {node_budget} nodes exceeded (best incumbent objective {})", best.objective)]
    SearchBudgetExceeded { node_budget: u64, best: Box<WdpSolution> },

    #[error("unknown mechanism `{0}` (expected mafl, repeated_srmra or double_auction)")]
    UnknownMechanism(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn validation(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Validation {
            field: field.into(),
            message: message.into(),
        }
    }

    /// True for errors caused by bad input rather than a failed run.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            Error::Validation { .. } | Error::UnknownMechanism(_) | Error::Json(_) | Error::Io(_)
        )
    }
}
