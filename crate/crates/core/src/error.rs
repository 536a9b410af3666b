use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("failed to read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse failure: {0}")]
    Parse(String),

    #[error("nonpositive edge length at edge ({u},{v})")]
    NonpositiveEdgeLength { u: usize, v: usize },

    #[error("nonpositive measure at vertex {vertex}")]
    NonpositiveMeasure { vertex: usize },

    #[error("graph is disconnected: vertex {vertex} is unreachable from vertex 0")]
    Disconnected { vertex: usize },

    #[error("invalid edge ({u},{v}): {reason}")]
    InvalidEdge { u: usize, v: usize, reason: String },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("compatibility violated at level {level} (t = {t}): w_d = 0 but w_m = {w_m}")]
    Compatibility { level: usize, t: f64, w_m: f64 },

    #[error("t = {t} lies outside the interval [{a}, {b}]")]
    OutOfInterval { t: f64, a: f64, b: f64 },

    #[error("index out of range: {0}")]
    OutOfRange(String),

    #[error("function is not constant on the quotient class of node {node}")]
    QuotientInconsistent { node: usize },

    #[error("zero set unusable for the logarithmic cutoff: {0}")]
    ZeroSet(String),

    #[error("internal consistency error: {0}")]
    Internal(String),

    #[error("fixture construction failed ({context}): {source}")]
    Fixture {
        context: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn fixture(context: impl Into<String>, source: Error) -> Self {
        Error::Fixture {
            context: context.into(),
            source: Box::new(source),
        }
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Parse(e.to_string())
    }
}
