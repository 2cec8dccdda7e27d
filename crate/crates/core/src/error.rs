use alloc::string::String;
use core::fmt;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Operand shapes do not fit together.
    ShapeMismatch {
        op: &'static str,
        expected: (usize, usize),
        found: (usize, usize),
    },
    /// A vector or buffer had the wrong length.
    LengthMismatch {
        op: &'static str,
        expected: usize,
        found: usize,
    },
    /// Input rejected by a precondition check.
    InvalidInput(String),
    /// Cholesky hit a non-positive pivot.
    NotPositiveDefinite { pivot: usize },
    /// Subspace iteration did not settle within its iteration cap.
    NoConvergence { iterations: usize },
    /// A gradient handed to the moment update held NaN or infinity.
    NonFiniteGradient,
    /// A slot produced NaN or infinity during an optimizer step.
    NonFiniteSlot { slot: String, step: u64 },
    /// The natural-gradient solve failed for a slot.
    NumericalFailure { slot: String, step: u64, pivot: usize },
    MissingGradient(String),
    DuplicateSlot(String),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::ShapeMismatch { op, expected, found } => write!(
                f,
                "{op}: expected shape {}x{}, found {}x{}",
                expected.0, expected.1, found.0, found.1
            ),
            Error::LengthMismatch { op, expected, found } => {
                write!(f, "{op}: expected length {expected}, found {found}")
            }
            Error::InvalidInput(msg) => write!(f, "invalid input: {msg}"),
            Error::NotPositiveDefinite { pivot } => {
                write!(f, "matrix is not positive definite (pivot {pivot})")
            }
            Error::NoConvergence { iterations } => {
                write!(f, "subspace iteration did not converge after {iterations} iterations")
            }
            Error::NonFiniteGradient => write!(f, "gradient contains NaN or infinite entries"),
            Error::NonFiniteSlot { slot, step } => {
                write!(f, "non-finite values in slot `{slot}` at step {step}")
            }
            Error::NumericalFailure { slot, step, pivot } => write!(
                f,
                "inverse-Fisher solve failed in slot `{slot}` at step {step} (pivot {pivot})"
            ),
            Error::MissingGradient(name) => write!(f, "no gradient supplied for slot `{name}`"),
            Error::DuplicateSlot(name) => write!(f, "slot `{name}` registered twice"),
        }
    }
}

impl core::error::Error for Error {}
