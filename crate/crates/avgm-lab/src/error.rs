use std::fmt;

use avgm_core::CoreError;

/// Lab-level error with the process exit code baked in:
/// 1 usage, 2 validation/suite failure, 3 runtime fault.
#[derive(Debug)]
pub struct LabError {
    pub exit_code: i32,
    pub message: String,
}

impl LabError {
    pub fn usage(message: impl Into<String>) -> Self {
        LabError {
            exit_code: 1,
            message: message.into(),
        }
    }

    pub fn validation(message: impl Into<String>) -> Self {
        LabError {
            exit_code: 2,
            message: message.into(),
        }
    }

    pub fn fault(message: impl Into<String>) -> Self {
        LabError {
            exit_code: 3,
            message: message.into(),
        }
    }
}

impl fmt::Display for LabError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.message)
    }
}

impl std::error::Error for LabError {}

impl From<CoreError> for LabError {
    fn from(e: CoreError) -> Self {
        let exit_code = match &e {
            CoreError::Config(_) | CoreError::Usage(_) | CoreError::Domain(_) => 1,
            CoreError::Contract(_) => 2,
            CoreError::NumericFault(_) => 3,
        };
        LabError {
            exit_code,
            message: format!("{e}"),
        }
    }
}

impl From<std::io::Error> for LabError {
    fn from(e: std::io::Error) -> Self {
        LabError::fault(format!("io error: {e}"))
    }
}

pub type Result<T> = std::result::Result<T, LabError>;
