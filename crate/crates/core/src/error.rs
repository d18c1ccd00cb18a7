//! Error types shared across the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Input outside the mathematical domain of an evaluator.
    #[error("domain error: {0}")]
    Domain(String),

    /// Argument outside the range of an invertible function, with the violated bound.
    #[error("range error: {0}")]
    Range(String),

    /// Operation not defined for the given divergence.
    #[error("not implemented: {0}")]
    NotImplemented(String),

    /// Tables or distributions with incompatible dimensions.
    #[error("shape error: {0}")]
    Shape(String),

    /// Invalid argument value.
    #[error("argument error: {0}")]
    Argument(String),

    /// Out-of-range context or outcome index.
    #[error("index error: {0}")]
    Index(String),

    /// A numerical procedure failed to converge or produced non-finite values.
    #[error("numeric error: {0}")]
    Numeric(String),

    /// Synthetic data generation failed.
    #[error("generation error: {0}")]
    Generation(String),

    /// Invalid or unknown configuration entry.
    #[error("config error: {0}")]
    Config(String),

    /// Malformed file contents.
    #[error("parse error: {0}")]
    Parse(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
