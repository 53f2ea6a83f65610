//! Structured errors shared across the crate.

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

/// Error type for every fallible core operation.
#[derive(Debug, Clone, PartialEq)]
pub enum CoreError {
    /// Operand shapes do not conform for the named operation.
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    /// An operation produced a NaN or infinite value.
    NonFinite { op: &'static str },
    /// `backward` was called on a node that is not a scalar.
    NotScalar { op: &'static str, shape: Vec<usize> },
    /// The tape was already consumed by a previous backward pass.
    TapeConsumed,
    /// An argument violates the operation's preconditions.
    InvalidArg { op: &'static str, msg: String },
    /// Model-spec text could not be parsed; `pos` is a byte offset.
    Parse { pos: usize, msg: String },
}

impl fmt::Display for CoreError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CoreError::ShapeMismatch { op, lhs, rhs } => {
                write!(f, "{op}: shape mismatch between {lhs:?} and {rhs:?}")
            }
            CoreError::NonFinite { op } => {
                write!(f, "{op}: produced a non-finite value")
            }
            CoreError::NotScalar { op, shape } => {
                write!(f, "{op}: expected a scalar node, got shape {shape:?}")
            }
            CoreError::TapeConsumed => {
                write!(f, "backward: tape already consumed by a previous backward pass")
            }
            CoreError::InvalidArg { op, msg } => write!(f, "{op}: {msg}"),
            CoreError::Parse { pos, msg } => {
                write!(f, "model spec parse error at byte {pos}: {msg}")
            }
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for CoreError {}

/// Shorthand for `CoreError::InvalidArg`.
pub(crate) fn invalid(op: &'static str, msg: impl Into<String>) -> CoreError {
    CoreError::InvalidArg { op, msg: msg.into() }
}
