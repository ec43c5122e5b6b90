use thiserror::Error;

/// Errors raised across the solver, the adaptation trainer and the morphing engine.
#[derive(Debug, Error)]
pub enum OtError {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("index ({i}, {j}) out of bounds for a {n_source}x{n_target} cost")]
    Index {
        i: usize,
        j: usize,
        n_source: usize,
        n_target: usize,
    },

    #[error("capacity exceeded: {0}")]
    Capacity(String),

    #[error("empty support: no pair within tolerance {eps_abs:e} of its constraint")]
    SupportEmpty { eps_abs: f64 },

    #[error("solver diverged at epoch {epoch}")]
    Diverged { epoch: usize },

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("adaptation round {round}: {source}")]
    Round {
        round: usize,
        #[source]
        source: Box<OtError>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, OtError>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(OtError::InvalidInput(msg.into()))
}
