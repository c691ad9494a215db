use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the simulator.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid label {label}: must lie in 1..={classes}")]
    InvalidLabel { label: u32, classes: usize },

    #[error("instance {0} is already in the unlabeled pool")]
    DuplicateInstance(crate::types::InstanceId),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("shape mismatch: expected {expected}, got {actual}")]
    Shape { expected: usize, actual: usize },

    #[error("not a probability distribution: {0}")]
    InvalidDistribution(String),

    #[error("precondition violated: {0}")]
    Precondition(&'static str),

    #[error("stream stalled: n(D) = {n_d} < {n_max} after {ticks} ticks")]
    Stall { ticks: u64, n_d: usize, n_max: usize },

    #[error("unknown config key `{0}`")]
    UnknownKey(String),

    #[error("config field `{field}` = {value} violates {bound}")]
    Constraint {
        field: &'static str,
        value: String,
        bound: &'static str,
    },

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

    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },

    #[error("no run logs found in {0}")]
    NoData(PathBuf),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
