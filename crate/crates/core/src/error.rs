use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("schema error: {0}")]
    Schema(String),

    #[error("domain error: {0}")]
    Domain(String),

    /// The Gram matrix has no direction above the regularization cutoff, or a
    /// reference Gram matrix is singular.
    #[error("rank error: {0}")]
    Rank(String),

    /// The requested quantity needs data the caller did not provide, e.g. the
    /// cross-realization matrix for `res`.
    #[error("capability error: {0}")]
    Capability(String),

    #[error("empty result: {0}")]
    EmptyResult(String),

    #[error("numerical instability: {0}")]
    Instability(String),

    #[error("linear algebra failure: {0}")]
    Numerical(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn capability(msg: impl Into<String>) -> Self {
        Error::Capability(msg.into())
    }
}
