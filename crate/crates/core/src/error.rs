use thiserror::Error;

/// Errors raised by the reconstruction library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    /// Some pixel receives zero total weight from the forward operator.
    #[error("degenerate operator: pixel {pixel} has zero sensitivity")]
    DegenerateOperator { pixel: usize },

    /// The anchor projects to zero on a bin with a positive count.
    #[error("singular anchor: projection of bin {bin} is zero but its count is {count}")]
    SingularAnchor { bin: usize, count: f64 },

    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    /// Malformed or truncated file contents.
    #[error("format error: {0}")]
    Format(String),

    #[error("I/O error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_len(what: &str, expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::Dimension(format!("{what}: expected length {expected}, got {got}")));
    }
    Ok(())
}
