use alloc::string::String;
use alloc::vec::Vec;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("grid mismatch: {0}")]
    GridMismatch(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("out of range: {0}")]
    OutOfRange(String),
    #[error("projection error: {0}")]
    Projection(String),
    /// Failure of an iterative scheme; `trace` holds the successive residuals or rates.
    #[error("no convergence: {reason} (trace: {trace:?})")]
    Convergence { reason: String, trace: Vec<f64> },
    /// The local horizon had to shrink below one grid step.
    #[error("step underflow at t = {time}: {reason}")]
    StepUnderflow { time: f64, reason: String },
    #[error("nonlinearity assumption violated: {0}")]
    Assumption(String),
}

macro_rules! bail {
    ($variant:ident, $($arg:tt)*) => {
        return Err($crate::error::Error::$variant(alloc::format!($($arg)*)))
    };
}
pub(crate) use bail;
