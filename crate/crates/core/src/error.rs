use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid spline space: {0}")]
    InvalidSpace(String),

    #[error("degree of freedom {index} out of range (space has {count})")]
    DofIndex { index: usize, count: usize },

    #[error("derivative order {order} not supported (max {max})")]
    UnsupportedDerivative { order: usize, max: usize },

    #[error("coefficient vector has length {got}, expected {expected}")]
    CoefficientLength { got: usize, expected: usize },

    #[error("{what} = {value} outside [{lo}, {hi}]")]
    OutOfRange {
        what: &'static str,
        value: f64,
        lo: f64,
        hi: f64,
    },

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("singular matrix (pivot {pivot} at column {column})")]
    SingularMatrix { column: usize, pivot: f64 },

    #[error(
        "fixed-point iteration did not converge in {iterations} iterations \
         (last step {last_step:.3e}, contraction {last_contraction:.3})"
    )]
    NoConvergence {
        iterations: usize,
        last_step: f64,
        last_contraction: f64,
    },

    #[error("weighted norm grew from {before:.6e} to {after:.6e}, above K = {k}")]
    GrowthBound { before: f64, after: f64, k: f64 },

    #[error("CFL margin {margin:.4e} < 1 at t = {time:.6}")]
    CflViolation { margin: f64, time: f64 },

    #[error("error metric undefined: {0}")]
    UndefinedMetric(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },

    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
