use alloc::string::String;
use core::fmt;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// An argument lies outside the domain where the quantity is defined.
    Domain(String),
    /// A collection that must be nonempty was empty.
    Empty(&'static str),
    /// Vector or matrix dimensions do not chain.
    Dimension { expected: usize, found: usize },
    /// A constructed network would exceed the configured parameter cap.
    ParamCap { params: usize, cap: usize },
    /// A builder cannot meet its size or accuracy contract.
    Construction(String),
    /// NaN, infinity or a diverging loss.
    Numeric(String),
    /// A measured approximation error exceeds its claimed bound.
    Certificate(String),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Domain(msg) => write!(f, "domain error: {msg}"),
            Error::Empty(what) => write!(f, "empty input: {what}"),
            Error::Dimension { expected, found } => {
                write!(f, "dimension mismatch: expected {expected}, found {found}")
            }
            Error::ParamCap { params, cap } => {
                write!(f, "network has {params} parameters, above the cap of {cap}")
            }
            Error::Construction(msg) => write!(f, "construction failed: {msg}"),
            Error::Numeric(msg) => write!(f, "numeric failure: {msg}"),
            Error::Certificate(msg) => write!(f, "certificate violation: {msg}"),
        }
    }
}

impl core::error::Error for Error {}

pub(crate) fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}
