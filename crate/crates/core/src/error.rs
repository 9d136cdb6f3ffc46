use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("training diverged at epoch {epoch}, batch {batch}: {detail}")]
    Diverged {
        epoch: usize,
        batch: usize,
        detail: String,
    },

    #[error("backward pass without a matching forward pass: {0}")]
    MissingForward(String),

    #[error("{players} players exceed the exact enumeration limit of {limit}; use unbiased_kernelshap")]
    TooManyPlayers { players: usize, limit: usize },

    #[error("empty input: {0}")]
    Empty(String),

    #[error("local accuracy violated: |logit - sum(phi) - delta| = {gap:e}")]
    LocalAccuracy { gap: f64 },
}

impl Error {
    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
