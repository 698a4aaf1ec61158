use alloc::string::String;
use core::fmt;

/// Errors raised by the pure algorithms in this crate.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// A non-finite value in an input matrix.
    NonFinite { row: usize, col: usize },
    /// Two operands that must agree in shape do not.
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    /// A precondition of the called operation does not hold.
    Contract(String),
    /// Volume-dependent quantities need a closed surface.
    NotClosed,
    /// The mesh has no area to sample from.
    ZeroArea,
    /// Structurally invalid mesh (bad index, NaN coordinate, no triangles).
    InvalidMesh(String),
    /// The optimizer produced non-finite coordinates.
    Diverged { iteration: usize },
    /// A referenced id does not exist in the current state.
    NotFound(String),
    /// An event arrived with the wrong sequence number.
    Conflict { expected: u64, found: u64 },
    /// A well-formed request rejected by a state guard.
    Validation(String),
}

pub type Result<T, E = Error> = core::result::Result<T, E>;

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::NonFinite { row, col } => {
                write!(f, "non-finite value at row {row}, column {col}")
            }
            Error::DimensionMismatch {
                what,
                expected,
                found,
            } => write!(f, "{what}: expected dimension {expected}, found {found}"),
            Error::Contract(msg) => write!(f, "contract violation: {msg}"),
            Error::NotClosed => f.write_str("mesh is not closed"),
            Error::ZeroArea => f.write_str("mesh has zero surface area"),
            Error::InvalidMesh(msg) => write!(f, "invalid mesh: {msg}"),
            Error::Diverged { iteration } => {
                write!(f, "embedding diverged at iteration {iteration}")
            }
            Error::NotFound(what) => write!(f, "not found: {what}"),
            Error::Conflict { expected, found } => {
                write!(f, "stale sequence number {found}, expected {expected}")
            }
            Error::Validation(msg) => f.write_str(msg),
        }
    }
}

impl core::error::Error for Error {}

pub(crate) fn contract(msg: impl Into<String>) -> Error {
    Error::Contract(msg.into())
}
