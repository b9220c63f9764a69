use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// An objective realization or residual was NaN or infinite.
    #[error("non-finite function value at evaluation {evaluation}")]
    NonFiniteValue { evaluation: u64 },

    /// A curvature pair contained NaN or infinite entries.
    #[error("non-finite curvature pair offered to L-BFGS memory")]
    NonFiniteCurvature,

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("unknown problem `{0}` (known problems: chebyquad)")]
    UnknownProblem(String),

    #[error("every FD-SG steplength diverged on {problem}")]
    AllTrialsDiverged { problem: String },

    #[error("failed to parse {path}: {message}")]
    Parse { path: PathBuf, message: String },

    #[error("manifests describe different problems: {0}")]
    MismatchedProblems(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

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
