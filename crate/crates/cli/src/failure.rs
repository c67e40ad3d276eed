use std::fmt::Display;
use std::path::Path;

use contrastive::Error;

pub const CONFIG: u8 = 2;
pub const DATA: u8 = 3;
pub const MODEL: u8 = 4;

#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    pub fn config(message: impl Display) -> Self {
        Self {
            code: CONFIG,
            message: message.to_string(),
        }
    }

    pub fn data(message: impl Display) -> Self {
        Self {
            code: DATA,
            message: message.to_string(),
        }
    }

    pub fn model(message: impl Display) -> Self {
        Self {
            code: MODEL,
            message: message.to_string(),
        }
    }
}

pub fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) => CONFIG,
        e if e.is_model_error() || matches!(e, Error::NoPaths | Error::NonFiniteProbe { .. }) => MODEL,
        _ => DATA,
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Self {
            code: exit_code(&e),
            message: e.to_string(),
        }
    }
}

/// Reads a file, failing with `code` when it cannot be read.
pub fn read(path: &Path, code: u8) -> Result<String, Failure> {
    std::fs::read_to_string(path).map_err(|e| Failure {
        code,
        message: format!("{}: {e}", path.display()),
    })
}

pub fn write(path: &Path, text: &str) -> Result<(), Failure> {
    std::fs::write(path, text).map_err(|e| Failure::data(format!("{}: {e}", path.display())))
}
