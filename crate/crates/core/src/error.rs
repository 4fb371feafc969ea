use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid depth {0}: depth must be finite and strictly positive")]
    InvalidDepth(f64),
    #[error("degenerate point: the point coincides with the camera center")]
    DegeneratePoint,
    #[error("degenerate light: the point coincides with the light position")]
    DegenerateLight,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    Dimension { expected: String, actual: String },
    #[error("degenerate lighting: the light directions are rank deficient")]
    DegenerateLighting,
    #[error("insufficient data: {available} usable samples, at least {required} required")]
    InsufficientData { available: usize, required: usize },
    #[error("empty mask: {0}")]
    EmptyMask(String),
    #[error("non-finite loss {loss} in epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize, loss: f64 },
    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::InvalidConfig(msg.into())
    }

    pub(crate) fn dimension(expected: impl core::fmt::Display, actual: impl core::fmt::Display) -> Self {
        use alloc::string::ToString;
        Error::Dimension {
            expected: expected.to_string(),
            actual: actual.to_string(),
        }
    }
}
