use thiserror::Error;

/// Errors produced by the reconstruction pipeline and its file formats.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("not found: {0}")]
    NotFound(String),

    #[error("failed to load {what}: {reason}")]
    Load { what: String, reason: String },

    #[error("alignment failed: {0}")]
    AlignmentFailed(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn load(what: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Load {
            what: what.into(),
            reason: reason.into(),
        }
    }
}
