use thiserror::Error;

/// Rejected inputs and configuration problems.
///
/// Decoding shortfalls are not errors in this sense; they are reported by
/// [`crate::matrix::Singular`], [`crate::padic::DecodeError`] and friends so
/// callers can keep collecting worker results.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("{0} is not prime")]
    NotPrime(u64),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("invalid decomposition: {0}")]
    Decomposition(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
