use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, SlabError>;

#[derive(Debug, Error)]
pub enum SlabError {
    /// A parameter lies outside the range where the requested quantity exists.
    #[error("domain error: {0}")]
    Domain(String),

    /// An input broke a documented invariant (e.g. a state off the sphere).
    #[error("contract violation: {0}")]
    Contract(String),

    /// Root finding, quadrature or the eigensolver failed to converge.
    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("i/o error at {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("format error: {0}")]
    Format(String),
}

impl SlabError {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Self::Domain(msg.into())
    }

    pub(crate) fn numerical(msg: impl Into<String>) -> Self {
        Self::Numerical(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::Io {
            path: path.into(),
            source,
        }
    }
}
