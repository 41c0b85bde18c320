use std::fmt;

use koopman_core::Error;

/// Exit status for computational failures (divergence, failed solves).
pub const EXIT_FAILURE: i32 = 1;
/// Exit status for bad flags, bad files and dimension mismatches.
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> CliError {
        CliError {
            code: EXIT_USAGE,
            message: message.into(),
        }
    }

    pub fn failure(message: impl Into<String>) -> CliError {
        CliError {
            code: EXIT_FAILURE,
            message: message.into(),
        }
    }

    pub fn io(path: &std::path::Path, err: std::io::Error) -> CliError {
        CliError::usage(format!("{}: {err}", path.display()))
    }
}

impl From<Error> for CliError {
    fn from(err: Error) -> CliError {
        let code = if err.is_validation() { EXIT_USAGE } else { EXIT_FAILURE };
        CliError {
            code,
            message: err.to_string(),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        // Keep the message on one line so `error:` output stays greppable.
        let one_line = self.message.split_whitespace().collect::<Vec<_>>().join(" ");
        write!(f, "error: {one_line}")
    }
}

pub type CliResult<T> = Result<T, CliError>;
