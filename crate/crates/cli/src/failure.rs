use std::fmt;

use upsa_core::error::ErrorCategory;

pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_DATA: u8 = 3;
pub const EXIT_NUMERIC: u8 = 4;

/// A user-facing error with its process exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    pub fn config(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_CONFIG,
            message: message.into(),
        }
    }

    pub fn data(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_DATA,
            message: message.into(),
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<upsa_core::Error> for Failure {
    fn from(e: upsa_core::Error) -> Self {
        let code = match e.category() {
            ErrorCategory::Config => EXIT_CONFIG,
            ErrorCategory::Data => EXIT_DATA,
            ErrorCategory::Numeric => EXIT_NUMERIC,
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}
