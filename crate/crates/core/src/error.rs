use thiserror::Error;

/// Errors raised while building grids, assembling, solving or running studies.
#[derive(Debug, Error)]
pub enum Error {
    #[error("hole coordinate {value} is not a multiple of 1/{m}")]
    Alignment { value: f64, m: usize },

    #[error("invalid cell geometry: {0}")]
    Geometry(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("assembly failed: {0}")]
    Assembly(String),

    #[error("solver did not converge after {iterations} iterations (relative residual {residual:e})")]
    Solver { iterations: usize, residual: f64 },

    #[error("cell solve at macro cell {cell} failed: {source}")]
    MacroCell {
        cell: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("positivity lost at step {step}: min value {min:e}")]
    Positivity { step: usize, min: f64 },

    #[error("snapshot pairing mismatch: {0}")]
    Pairing(String),

    #[error("rate fit needs at least 3 positive points, got {0}")]
    Fit(usize),

    #[error("config error: {0}")]
    Config(String),

    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<Error>,
    },

    #[error("cannot write output: {0}")]
    Output(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn in_stage(self, stage: impl Into<String>) -> Error {
        Error::Stage {
            stage: stage.into(),
            source: Box::new(self),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
