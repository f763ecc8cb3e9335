use thiserror::Error;

/// Errors raised by the numerical core.
#[derive(Debug, Error)]
pub enum Error {
    /// A scalar parameter is outside its admissible range.
    #[error("invalid parameter `{name}`: {reason}")]
    Parameter { name: &'static str, reason: String },

    /// Input lies outside the mathematical domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// Dimensions of two operands disagree.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// A vector with zero norm was passed where a direction is required.
    #[error("degenerate vector: zero norm")]
    DegenerateVector,

    /// All target aggregates vanished; no target distribution can be formed.
    #[error("degenerate target: class aggregates sum to zero")]
    DegenerateTarget,

    /// Floating-point breakdown inside an iterative solver.
    #[error("numeric failure: {0}")]
    Numeric(String),

    /// Instance exceeds what the exact oracle is built to handle.
    #[error("capacity exceeded: {0}")]
    Capacity(String),

    /// Malformed or out-of-range input data.
    #[error("data error: {0}")]
    Data(String),

    /// Malformed file contents.
    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn shape(msg: impl Into<String>) -> Error {
    Error::Shape(msg.into())
}
