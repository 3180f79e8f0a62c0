use thiserror::Error;

/// Errors raised while building or running the generator.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid geometry: {0}")]
    Geometry(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("index out of range: {what} = {value}, valid range {lo}..={hi}")]
    Index {
        what: &'static str,
        value: usize,
        lo: usize,
        hi: usize,
    },

    #[error("eigendecomposition failed at bin {bin}")]
    Factorization { bin: usize },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Container(#[from] crate::io::ContainerError),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
