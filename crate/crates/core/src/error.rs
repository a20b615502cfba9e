use alloc::string::String;
use alloc::vec::Vec;

/// One recorded iteration of a gradient-descent loop.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TraceEntry {
    pub iteration: usize,
    /// `max_j |θ_{k+1,j} - θ_{k,j}|`.
    pub max_change: f64,
    /// Method-specific loss at the iterate the step was taken from.
    pub loss: f64,
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch for {what}: expected {expected}, got {got}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("invalid dataset at row {row}: {reason}")]
    InvalidData { row: usize, reason: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("singular Gram matrix: pivot {dimension} is not positive")]
    Singular { dimension: usize },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("iterate became non-finite after {iterations} iterations")]
    Divergence {
        iterations: usize,
        trace: Vec<TraceEntry>,
    },

    #[error("correlation {0} outside (-1, 1)")]
    Domain(f64),

    #[error("objective is not finite at the starting point")]
    NonFiniteObjective,

    #[error("every candidate sieve order failed")]
    NoOrderSelected,
}

pub type Result<T> = core::result::Result<T, Error>;

pub(crate) fn check_len(what: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            what,
            expected,
            got,
        })
    }
}
