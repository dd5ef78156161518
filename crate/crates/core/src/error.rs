use std::path::PathBuf;

/// Errors raised across the toolkit.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A parameter lies outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// Tabulated input violates a structural requirement (empty, non-convex, ...).
    #[error("data error: {0}")]
    Data(String),

    /// A rasterized domain contains no interior cell or site.
    #[error("degenerate domain: {0}")]
    DegenerateDomain(String),

    /// Incompatible grid, field, or boundary-condition configuration.
    #[error("configuration error: {0}")]
    Config(String),

    /// A bound family was evaluated outside its declared range.
    #[error("applicability error: {0}")]
    Applicability(String),

    /// A caller violated an operation's precondition on its inputs.
    #[error("contract error: {0}")]
    Contract(String),

    /// Factorization or eigensolver failure.
    #[error("numerical error: {0}")]
    Numerical(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
