//! Error type shared by all core modules.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CoreError {
    /// Two tensors (or a tensor and an operation) disagree on an axis extent.
    #[error("shape mismatch in {context}: axis {axis} expects {expected}, got {got}")]
    ShapeMismatch {
        context: &'static str,
        axis: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("non-finite value at flat index {index} in {context}")]
    NonFinite { context: &'static str, index: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, CoreError>;
