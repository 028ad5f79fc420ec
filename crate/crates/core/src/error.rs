use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// A value outside its validity domain. `path` names the offending field
    /// (e.g. `params.alpha`).
    #[error("{path}: {reason}")]
    Invalid { path: String, reason: String },

    #[error("investment must be non-negative, got {0}")]
    NegativeInvestment(f64),

    #[error("{what} must be finite, got {value}")]
    NonFinite { what: &'static str, value: f64 },

    #[error("malformed config at `{path}`: {message}")]
    Malformed { path: String, message: String },

    #[error("config has no sweep entry")]
    MissingSweep,

    #[error("sweep step {parameter}={value}: {source}")]
    SweepStep {
        parameter: &'static str,
        value: f64,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(path: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Invalid {
            path: path.into(),
            reason: reason.into(),
        }
    }

    /// Prefixes the field path of an [`Error::Invalid`] with `scope`.
    pub(crate) fn scoped(self, scope: &str) -> Self {
        match self {
            Error::Invalid { path, reason } => Error::Invalid {
                path: format!("{scope}.{path}"),
                reason,
            },
            other => other,
        }
    }
}
