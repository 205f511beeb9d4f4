use thiserror::Error;

/// Errors produced by the selection pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("unsupported configuration: {0}")]
    UnsupportedConfiguration(String),

    #[error("numerical degeneracy: {0}")]
    NumericalDegeneracy(String),

    #[error("subarray of {0} sensors is too small for a bearing bound (need at least 2)")]
    InsufficientSubarray(usize),

    #[error("labeling failed: {0}")]
    LabelingFailed(String),

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidArgument(msg.into()))
}
