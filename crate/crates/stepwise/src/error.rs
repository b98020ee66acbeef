//! Crate-wide error type.

use std::fmt;

/// Errors raised by the stepsize rules, solvers, and experiment harnesses.
#[derive(Debug)]
pub enum Error {
    /// A numeric argument is outside its documented domain.
    InvalidParameter(String),
    /// A rule specification string does not match `name(:key=value)*`.
    ParseRule(String),
    /// Vector or matrix arguments disagree on dimensions.
    DimensionMismatch { expected: usize, got: usize },
    /// A numerical guarantee (solver residual, termination) was not met.
    Numerical(String),
    Io(std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::InvalidParameter(msg) => write!(f, "invalid parameter: {msg}"),
            Error::ParseRule(msg) => write!(f, "invalid rule spec: {msg}"),
            Error::DimensionMismatch { expected, got } => {
                write!(f, "dimension mismatch: expected {expected}, got {got}")
            }
            Error::Numerical(msg) => write!(f, "numerical failure: {msg}"),
            Error::Io(err) => write!(f, "io error: {err}"),
        }
    }
}

impl std::error::Error for Error {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            Error::Io(err) => Some(err),
            _ => None,
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(err: std::io::Error) -> Self {
        Error::Io(err)
    }
}
