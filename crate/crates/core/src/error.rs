use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("malformed input: {0}")]
    Malformed(String),

    #[error("non-contiguous time index: expected t={expected}, found t={found}")]
    NonContiguous { expected: i64, found: i64 },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("insufficient pre-samples: need {needed}, trajectory holds {available}")]
    InsufficientPreSamples { needed: usize, available: usize },

    #[error("matrix is not positive semidefinite (min eigenvalue {min_eig:e})")]
    NotPsd { min_eig: f64 },

    #[error("pair (A, C) is not observable")]
    Unobservable,

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("system is not stable (spectral radius {rho})")]
    Unstable { rho: f64 },

    #[error("controller extraction failed: {0}")]
    Extraction(String),

    #[error("no feasible point at the upper end of the bracket (gamma = {hi})")]
    NotFound { hi: f64 },

    #[error("precondition violated: {0}")]
    Precondition(String),
}

pub(crate) fn dim_err(what: impl Into<String>) -> Error {
    Error::Dimension(what.into())
}
