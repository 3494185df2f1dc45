use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid grid, stepper or scenario settings.
    #[error("configuration error: {0}")]
    Config(String),

    /// An operator or probe parameter outside its admissible range.
    #[error("parameter error: {0}")]
    Parameter(String),

    /// Fields bound to different grids were combined.
    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("non-finite sample encountered in {0}")]
    NonFinite(&'static str),

    #[error("Picard iteration diverged at iteration {iteration}: increment {increment:.3e} > previous {previous:.3e}")]
    Divergence {
        iteration: usize,
        increment: f64,
        previous: f64,
    },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    /// A diagnostic series needed by a residual was not recorded.
    #[error("missing series `{0}` in trajectory records")]
    MissingSeries(&'static str),

    #[error("checkpoint {path}: {reason}")]
    Checkpoint { path: PathBuf, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
