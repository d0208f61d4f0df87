use std::io;
use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("infeasible grid: only {available} integers in [{lo}, {hi}] but {count} requested")]
    InfeasibleGrid {
        lo: u64,
        hi: u64,
        count: usize,
        available: u64,
    },

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("no cost formula registered for op `{0}`")]
    UnknownOp(String),

    #[error("pool is empty")]
    EmptyPool,

    #[error("no record falls inside the complexity range [{lo}, {hi})")]
    EmptyRange { lo: f64, hi: f64 },

    #[error("pool mixes synthetic and external records")]
    MixedSources,

    #[error("evaluator failure: {0}")]
    Evaluator(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("{path}: {source}")]
    File {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
