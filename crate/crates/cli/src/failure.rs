use std::fmt::Display;
use std::process::ExitCode;

/// An error tagged with the process exit code it maps to.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub error: anyhow::Error,
}

pub const COMPUTATION: u8 = 1;
pub const USAGE: u8 = 2;

impl Failure {
    pub fn usage(msg: impl Display) -> Failure {
        Failure {
            code: USAGE,
            error: anyhow::anyhow!("{msg}"),
        }
    }

    pub fn exit_code(&self) -> ExitCode {
        ExitCode::from(self.code)
    }
}

pub trait Classify<T> {
    /// Bad input, missing files and other problems the caller can fix.
    fn usage(self, context: impl Display) -> Result<T, Failure>;
    /// Failures while training, inferring or scoring.
    fn compute(self, context: impl Display) -> Result<T, Failure>;
}

impl<T, E: Into<anyhow::Error>> Classify<T> for Result<T, E> {
    fn usage(self, context: impl Display) -> Result<T, Failure> {
        self.map_err(|e| Failure {
            code: USAGE,
            error: e.into().context(context.to_string()),
        })
    }

    fn compute(self, context: impl Display) -> Result<T, Failure> {
        self.map_err(|e| Failure {
            code: COMPUTATION,
            error: e.into().context(context.to_string()),
        })
    }
}
