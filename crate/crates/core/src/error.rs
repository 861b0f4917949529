use thiserror::Error;

/// Errors raised by the hitscan engine.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("unknown candidate id {0}")]
    UnknownCandidate(usize),

    #[error("candidate {0} has already been observed")]
    AlreadyObserved(usize),

    #[error("matrix is not positive definite after jitter {jitter:e}")]
    NotPositiveDefinite { jitter: f64 },

    #[error("enumeration guard exceeded: C({n}, {k}) = {count} > {guard}")]
    EnumerationGuard {
        n: usize,
        k: usize,
        count: f64,
        guard: f64,
    },

    #[error("tabular data: {0}")]
    Tabular(String),

    #[error("io: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn ensure_finite(values: &[f64], what: &'static str) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what))
    }
}
