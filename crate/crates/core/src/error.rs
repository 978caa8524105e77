// SPDX-License-Identifier: Apache-2.0

use thiserror::Error;

/// Errors shared by every module of the crate.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum Error {
    /// Caller violated an operation's precondition.
    #[error("usage error: {0}")]
    Usage(String),

    /// A size guard was exceeded; the string names the guard.
    #[error("capacity error: {0}")]
    Capacity(String),

    /// Netlist or codebook text could not be parsed.
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    /// Conditional probability requested on an empty conditioning event.
    #[error("undefined conditional: {0}")]
    UndefinedConditional(String),

    /// A hard invariant check failed during a run.
    #[error("assertion failed: {0}")]
    Assertion(String),

    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn usage<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Usage(msg.into()))
}

pub(crate) fn capacity<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Capacity(msg.into()))
}
