use std::fmt;
use std::path::Path;

use capscale::Error;

/// Exit status contract: 0 success, 2 usage or validation, 3 numerical failure.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FailureKind {
    Usage,
    Validation,
    Io,
    Numerical,
}

impl FailureKind {
    pub fn exit_code(self) -> i32 {
        match self {
            FailureKind::Usage | FailureKind::Validation | FailureKind::Io => 2,
            FailureKind::Numerical => 3,
        }
    }

    pub fn tag(self) -> &'static str {
        match self {
            FailureKind::Usage => "usage",
            FailureKind::Validation => "validation",
            FailureKind::Io => "io",
            FailureKind::Numerical => "numerical",
        }
    }
}

#[derive(Debug)]
pub struct Failure {
    pub kind: FailureKind,
    pub message: String,
}

impl Failure {
    pub fn new(kind: FailureKind, message: impl Into<String>) -> Self {
        Failure { kind, message: message.into() }
    }

    pub fn validation(message: impl Into<String>) -> Self {
        Self::new(FailureKind::Validation, message)
    }

    pub fn numerical(message: impl Into<String>) -> Self {
        Self::new(FailureKind::Numerical, message)
    }

    pub fn io(path: &Path, err: impl fmt::Display) -> Self {
        Self::new(FailureKind::Io, format!("{}: {err}", path.display()))
    }

    /// The single stderr line: `error[<kind>]: <message>`.
    pub fn line(&self) -> String {
        let flat: Vec<&str> = self.message.lines().map(str::trim).filter(|l| !l.is_empty()).collect();
        format!("error[{}]: {}", self.kind.tag(), flat.join(" "))
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let kind = if e.is_numerical() {
            FailureKind::Numerical
        } else if matches!(e, Error::Io { .. }) {
            FailureKind::Io
        } else {
            FailureKind::Validation
        };
        Failure::new(kind, e.to_string())
    }
}

pub type CliResult<T> = Result<T, Failure>;
