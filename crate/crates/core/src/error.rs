use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    /// Image dimensions do not tile exactly under the requested patch size.
    #[error("geometry: {width}x{height} image does not tile into {patch}x{patch} patches")]
    Geometry { width: usize, height: usize, patch: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: String, got: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A caller broke an operation's documented contract.
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("single-class input: {0}")]
    SingleClass(&'static str),

    #[error("non-finite loss {loss} at optimizer step {step} (batch of {batch})")]
    NonFiniteLoss { step: u64, loss: f64, batch: usize },

    #[error("checkpoint: {0}")]
    Checkpoint(String),
}

impl Error {
    pub(crate) fn mismatch(expected: impl core::fmt::Display, got: impl core::fmt::Display) -> Self {
        use alloc::string::ToString;
        Error::DimensionMismatch { expected: expected.to_string(), got: got.to_string() }
    }
}
