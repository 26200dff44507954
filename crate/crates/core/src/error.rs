use thiserror::Error;

/// Errors produced by the modelling, scoring and data layers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("numerical failure in {context} (jitter attempted up to {jitter:e})")]
    NumericalFailure { context: String, jitter: f64 },

    #[error("value {value} outside attainable range ({lower}, {upper})")]
    Range { value: f64, lower: f64, upper: f64 },

    #[error("did not converge: {0}")]
    Convergence(String),

    #[error("degenerate warp: {0}")]
    DegenerateWarp(String),

    #[error("optimizer start point is not finite: {0}")]
    InvalidStart(String),

    #[error("all {restarts} restarts failed: {}", diagnostics.join("; "))]
    FitFailure {
        restarts: usize,
        diagnostics: Vec<String>,
    },

    #[error("scoring failed in the {direction} direction: {source}")]
    ScoringFailure {
        direction: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("schema error: {0}")]
    Schema(String),

    #[error("dataset has no usable rows")]
    EmptyDataset,

    #[error("{transform} transform undefined for target rows {rows:?}")]
    Domain { transform: String, rows: Vec<usize> },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for errors caused by the numerics rather than by the caller's data.
    pub fn is_numerical(&self) -> bool {
        match self {
            Error::NumericalFailure { .. }
            | Error::Convergence(_)
            | Error::DegenerateWarp(_)
            | Error::InvalidStart(_)
            | Error::FitFailure { .. }
            | Error::Range { .. } => true,
            Error::ScoringFailure { source, .. } => source.is_numerical(),
            _ => false,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
