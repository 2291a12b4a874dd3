//! Crate-wide error type and result alias.

use thiserror::Error;

/// Result alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A 4-letter personality code failed to parse. `position` is the axis
    /// index (0..4) and `legal` names the two letters accepted there.
    #[error("invalid personality letter {found:?} at axis {axis} (position {position}): expected one of {legal:?}")]
    MbtiParse {
        position: usize,
        axis: &'static str,
        found: char,
        legal: [char; 2],
    },

    #[error("personality code must have exactly 4 letters, got {0:?}")]
    MbtiLength(String),

    #[error("invalid eight-label vector: {0}")]
    BadLabelVector(String),

    #[error("corpus error: {0}")]
    Corpus(String),

    #[error("episode {episode}: {message}")]
    Episode { episode: String, message: String },

    #[error("shape mismatch: expected {expected}, got {actual}")]
    Shape { expected: String, actual: String },

    #[error("metric input error: {0}")]
    Metric(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("training diverged (non-finite loss) at seed {seed}, epoch {epoch}")]
    Divergence { seed: u64, epoch: usize },

    #[error("gold trace mismatch for episode {episode}: {message}")]
    TraceMismatch { episode: String, message: String },

    #[error("unknown person tag {0:?}")]
    UnknownPerson(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit code for the CLI: 2 for configuration problems, 3 for
    /// training divergence, 1 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 2,
            Error::Divergence { .. } => 3,
            _ => 1,
        }
    }
}
