use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("unknown format `{0}` (expected `adjacency` or `triplet`)")]
    Format(String),
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("no users with held-out interactions to evaluate")]
    EmptyEvaluation,
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("capacity exceeded: {0}")]
    Capacity(String),
    #[error("fit failed: {0}")]
    Fit(String),
    #[error("invalid graph cache: {0}")]
    Cache(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
