use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Operands have incompatible dimensions.
    Shape(String),
    /// A configuration value is outside its allowed range.
    Config(String),
    /// Data violates a domain invariant. Every violation found is listed.
    Validation(Vec<String>),
    /// An iterative method failed to converge or produced non-finite values.
    Numerical(String),
    /// Invalid argument to a pure function (e.g. a degenerate interval).
    Argument(String),
}

impl Error {
    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Shape(m) => write!(f, "shape error: {m}"),
            Error::Config(m) => write!(f, "configuration error: {m}"),
            Error::Validation(v) => {
                write!(f, "validation failed ({} violation(s))", v.len())?;
                for item in v {
                    write!(f, "\n  - {item}")?;
                }
                Ok(())
            }
            Error::Numerical(m) => write!(f, "numerical error: {m}"),
            Error::Argument(m) => write!(f, "invalid argument: {m}"),
        }
    }
}

impl core::error::Error for Error {}
