use thiserror::Error;

/// Errors raised by the solvers, fitters and I/O layer.
#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: `{key}` {reason}")]
    Config { key: String, reason: String },

    #[error("numerical failure: {0}")]
    NumericalFailure(String),

    #[error("degenerate fit: {0}")]
    DegenerateFit(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("fit did not converge after {iterations} iterations (objective {objective:e})")]
    FitFailure {
        iterations: usize,
        objective: f64,
        /// Best parameter vector reached before giving up.
        best: Vec<f64>,
    },

    #[error("window {index}: {source}")]
    Window {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("degenerate sample set: {0}")]
    DegenerateMoments(String),

    #[error("missing inputs for: {}", .0.join(", "))]
    MissingInputs(Vec<String>),

    #[error("parse error in {context}: {reason}")]
    Parse { context: String, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn config(key: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            reason: reason.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
