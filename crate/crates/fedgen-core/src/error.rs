//! Error types shared across the core library.

use alloc::string::String;

/// Errors raised by numeric operations, training routines, and the
/// federation protocol.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CoreError {
    /// Two operands (or an operand and a parameter container) disagree on
    /// shape. Both shapes are spelled out so the message is actionable.
    #[error("{op}: shape mismatch, expected {expected}, got {actual}")]
    ShapeMismatch {
        op: &'static str,
        expected: String,
        actual: String,
    },
    /// An argument is outside its documented domain (non-positive variance,
    /// empty data, invalid permutation, ...).
    #[error("{op}: {msg}")]
    InvalidArgument { op: &'static str, msg: String },
    /// Input is structurally valid but degenerate for the requested
    /// computation (e.g. zero variance where a ratio is taken).
    #[error("{op}: degenerate input, {msg}")]
    DegenerateInput { op: &'static str, msg: String },
}

impl CoreError {
    pub(crate) fn shape(op: &'static str, expected: String, actual: String) -> Self {
        CoreError::ShapeMismatch {
            op,
            expected,
            actual,
        }
    }

    pub(crate) fn invalid(op: &'static str, msg: impl Into<String>) -> Self {
        CoreError::InvalidArgument {
            op,
            msg: msg.into(),
        }
    }

    pub(crate) fn degenerate(op: &'static str, msg: impl Into<String>) -> Self {
        CoreError::DegenerateInput {
            op,
            msg: msg.into(),
        }
    }
}

/// Errors raised when decoding the on-disk tensor container format.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum FormatError {
    #[error("bad magic: expected \"FGSIMT01\"")]
    BadMagic,
    #[error("unknown payload flag {0} (expected 0 = packed bits, 1 = fp64)")]
    BadFlag(u8),
    #[error("truncated file: expected {expected} bytes, got {actual}")]
    Truncated { expected: usize, actual: usize },
    #[error("tensor dimensions overflow the addressable size")]
    DimOverflow,
    #[error("trailing bytes after payload and labels")]
    TrailingBytes,
}
