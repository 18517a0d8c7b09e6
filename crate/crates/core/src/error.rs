use thiserror::Error;

/// Errors raised by the numerical pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("unsupported capability: {0}")]
    Capability(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("graph is disconnected ({components} components)")]
    Disconnected { components: usize },

    #[error("no convergence after {iterations} iterations (best residuals {residuals:?})")]
    Convergence { iterations: usize, residuals: Vec<f64> },

    #[error("no sample within radius {radius} of the evaluation point")]
    Coverage { radius: f64 },

    #[error("eigenvector is orthogonal to the target eigenspace")]
    DegenerateAlignment,

    #[error("basis is numerically linearly dependent")]
    DegenerateBasis,

    #[error("study aborted: {failures} of {attempted} trials failed")]
    StudyAborted { failures: usize, attempted: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
