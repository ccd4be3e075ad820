use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: expected 3 tab-separated fields, found {found}")]
    Parse { line: usize, found: usize },

    #[error("cannot split {0} triples into train/valid/test")]
    TooFewTriples(usize),

    #[error("invalid cluster count k={k} for {relations} relations")]
    InvalidClusterCount { k: usize, relations: usize },

    #[error("cluster {0} is empty")]
    EmptyCluster(usize),

    #[error("relation {0} is not covered by the clustering")]
    UncoveredRelation(u32),

    #[error("negative sampling gave up after {0} consecutive rejections")]
    DegeneratePool(usize),

    #[error("non-finite gradient in row {0}")]
    NonFiniteGradient(usize),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("true answer {0} is not among the candidates")]
    MissingAnswer(u32),

    #[error("unknown training mode `{0}`")]
    InvalidMode(String),

    #[error("unknown model kind `{0}`")]
    InvalidModel(String),

    #[error("invalid configuration:\n  {}", .0.join("\n  "))]
    Config(Vec<String>),

    #[error("no client has a forgetting set")]
    NoUnlearningClients,

    #[error("forgetting proportion {0} must lie in (0, 1)")]
    InvalidProportion(f64),

    #[error("cannot sample a forgetting set from an empty training set")]
    EmptyTrainSet,

    #[error("checkpoint {path}: {reason}")]
    Checkpoint { path: PathBuf, reason: String },

    #[error("unsupported checkpoint version {found} (expected {expected})")]
    Version { found: u32, expected: u32 },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
