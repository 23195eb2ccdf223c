use std::path::PathBuf;

use thiserror::Error;

/// Errors raised while loading data, fitting, or simulating.
#[derive(Debug, Error)]
pub enum JttError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed CSV in {path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },

    #[error("malformed manifest {path}: {source}")]
    Manifest {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error("non-numeric cell {value:?} in {location}")]
    NonNumeric { location: String, value: String },

    #[error("column-count mismatch: group {group} has {found} design columns, expected {expected}")]
    ColumnMismatch {
        group: String,
        expected: usize,
        found: usize,
    },

    #[error("empty group {0}")]
    EmptyGroup(String),

    #[error("self-loop on vertex {0}")]
    SelfLoop(usize),

    #[error("vertex out of range: {vertex} not in 1..={m}")]
    VertexOutOfRange { vertex: usize, m: usize },

    #[error("rank-deficient design in {context}: numeric rank {rank} < {p}")]
    RankDeficient { context: String, rank: usize, p: usize },

    #[error("degenerate: zero residual variance")]
    DegenerateVariance,

    #[error("invalid dimensions: {0}")]
    Dimensions(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-integral cluster count: ratio {ratio} times m = {m} is not an integer")]
    NonIntegralClusters { ratio: f64, m: usize },

    #[error("reference oracle size guard exceeded: dimension {dim} > {limit}")]
    OracleGuard { dim: usize, limit: usize },
}

pub type Result<T> = std::result::Result<T, JttError>;
