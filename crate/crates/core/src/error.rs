use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid regime: {0}")]
    InvalidRegime(String),

    #[error("degenerate process: {0}")]
    DegenerateProcess(String),

    #[error("unsupported size: n = {n} exceeds the limit of {max}")]
    UnsupportedSize { n: usize, max: usize },

    #[error("insufficient samples: {accepted} accepted, at least {required} required")]
    InsufficientSamples { accepted: usize, required: usize },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
