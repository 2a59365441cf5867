use alloc::string::String;
use core::fmt;

/// Crate-wide error type. The variants map onto the process exit codes used
/// by the CLI: configuration and usage problems are caller mistakes,
/// contract violations are validation failures, numeric faults are runtime
/// faults of a training run.
#[derive(Debug, Clone, PartialEq)]
pub enum CoreError {
    /// Bad configuration (shape mismatch, map too small, invalid widths).
    Config(String),
    /// Misuse of an API (acting on a finished episode, M_i = 0 where > 0 is required).
    Usage(String),
    /// A stated precondition of the underlying theory does not hold.
    Contract(String),
    /// Parameter outside the mathematical domain of a formula.
    Domain(String),
    /// Non-finite number encountered during training.
    NumericFault(String),
}

impl fmt::Display for CoreError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CoreError::Config(m) => write!(f, "configuration error: {m}"),
            CoreError::Usage(m) => write!(f, "usage error: {m}"),
            CoreError::Contract(m) => write!(f, "contract violation: {m}"),
            CoreError::Domain(m) => write!(f, "domain error: {m}"),
            CoreError::NumericFault(m) => write!(f, "numeric fault: {m}"),
        }
    }
}

pub type Result<T> = core::result::Result<T, CoreError>;
