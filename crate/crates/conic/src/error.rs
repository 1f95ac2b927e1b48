use thiserror::Error;

/// Errors raised while building or solving a cone program.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConicError {
    #[error("malformed program: {0}")]
    Malformed(String),
    #[error("non-finite data in {0}")]
    NonFinite(&'static str),
    #[error("factorization failed: {0}")]
    Factorization(String),
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("io: {0}")]
    Io(String),
}

impl From<std::io::Error> for ConicError {
    fn from(e: std::io::Error) -> Self {
        ConicError::Io(e.to_string())
    }
}
