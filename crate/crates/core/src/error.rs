use thiserror::Error;

/// Errors raised across the library.
///
/// Variants are grouped so the CLI can map them onto its exit-code contract:
/// `Config`/`Io` are configuration or filesystem problems, `Data` covers
/// malformed or inconsistent inputs, and `Numerical` covers solver failures.
#[derive(Debug, Error)]
pub enum SgflmError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("invalid data: {0}")]
    Data(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("matrix is singular or ill-conditioned (condition number {condition:.3e}): {context}")]
    IllConditioned { context: String, condition: f64 },

    #[error("io error at {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl SgflmError {
    pub fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        SgflmError::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, SgflmError>;
