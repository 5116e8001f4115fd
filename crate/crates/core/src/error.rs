use thiserror::Error;

/// Errors raised by the pairing engine, the operator algebra and the solvers.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// A function was evaluated or integrated where it is not defined.
    #[error("domain error: {0}")]
    Domain(String),
    /// Quadrature or an iterative routine failed to converge.
    #[error("numerical error: {0}")]
    Numerical(String),
    /// An argument violated a precondition.
    #[error("argument error: {0}")]
    Argument(String),
    /// Malformed scenario, registry or JSON input.
    #[error("input error: {0}")]
    Input(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// The message without the category prefix.
    pub fn message(&self) -> &str {
        match self {
            Error::Domain(m) | Error::Numerical(m) | Error::Argument(m) | Error::Input(m) => m,
        }
    }
}
