use alloc::string::String;
use core::fmt;

use crate::tensor::Shape;

/// Errors raised by the numerical core.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Two shapes that must agree along `dim` do not.
    ShapeMismatch {
        op: &'static str,
        dim: &'static str,
        expected: usize,
        found: usize,
    },
    /// A shape violated an operation's precondition.
    InvalidShape { op: &'static str, shape: Shape, reason: String },
    /// A scalar argument was out of its legal range.
    InvalidArgument { op: &'static str, reason: String },
    /// A value that must be finite was NaN or infinite.
    NonFinite { op: &'static str, index: usize },
    /// A map that must be binary held another value.
    NotBinary { op: &'static str, index: usize, value: f64 },
    /// No gradient was available for a parameter.
    MissingGradient { name: String },
    /// A named parameter was not found in a store.
    UnknownParameter { name: String },
}

pub type Result<T> = core::result::Result<T, Error>;

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::ShapeMismatch { op, dim, expected, found } => write!(
                f,
                "{op}: {dim} mismatch (expected {expected}, found {found})"
            ),
            Error::InvalidShape { op, shape, reason } => {
                write!(f, "{op}: invalid shape {shape}: {reason}")
            }
            Error::InvalidArgument { op, reason } => write!(f, "{op}: {reason}"),
            Error::NonFinite { op, index } => {
                write!(f, "{op}: non-finite value at flat index {index}")
            }
            Error::NotBinary { op, index, value } => write!(
                f,
                "{op}: expected a binary map, found {value} at flat index {index}"
            ),
            Error::MissingGradient { name } => write!(f, "no gradient for parameter `{name}`"),
            Error::UnknownParameter { name } => write!(f, "unknown parameter `{name}`"),
        }
    }
}

impl core::error::Error for Error {}
