use thiserror::Error;

use crate::dataset::Violation;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("structural error: {0}")]
    Structural(String),

    #[error("invalid dataset: {} violation(s), first: {}", .0.len(), .0.first().map(|v| v.to_string()).unwrap_or_default())]
    Invalid(Vec<Violation>),

    #[error("cannot split dataset: {0}")]
    Split(String),

    #[error("malformed file: {0}")]
    Parse(String),

    #[error("unsupported schema version {found} (expected {expected})")]
    SchemaVersion { found: u32, expected: u32 },

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("tree exceeds max_nodes = {0}")]
    TreeTooLarge(usize),

    #[error("oracle failure: {0}")]
    Oracle(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse(e.to_string())
    }
}
