//! Crate-wide error type.

use thiserror::Error;

/// Errors surfaced by data handling, estimation, training, and reporting.
#[derive(Debug, Error)]
pub enum Error {
    #[error("column `{0}` not found in CSV header")]
    MissingColumn(String),

    #[error("attribute not binary: expected labels {{`{expected_x0}`, `{expected_x1}`}}, found {found:?}")]
    AttributeNotBinary {
        expected_x0: String,
        expected_x1: String,
        found: Vec<String>,
    },

    #[error("invalid SFM spec: {0}")]
    InvalidSpec(String),

    #[error("dataset is empty after ingestion")]
    EmptyDataset,

    #[error("column `{column}` row {row}: cannot parse `{value}` as a number")]
    NonNumeric {
        column: String,
        row: usize,
        value: String,
    },

    #[error("split fraction must lie in (0, 1), got {0}")]
    InvalidFraction(f64),

    #[error("attribute group `{label}` has {count} rows; at least 20 are needed for a 10-per-fold split")]
    GroupTooSmall { label: String, count: usize },

    #[error("constraint set contains the spurious effect but this SCM family has no spurious path")]
    NoSpuriousPath,

    #[error("enumeration over {bits} exogenous bits exceeds the budget of {budget}")]
    EnumerationBudget { bits: usize, budget: usize },

    #[error("stratum X={x} has no rows")]
    EmptyStratum { x: u8 },

    #[error("loss kinds differ: {left} vs {right}")]
    MismatchedLossKind { left: String, right: String },

    #[error("effect count m={0} outside supported range 1..=6")]
    EffectCountOutOfRange(usize),

    #[error("edge metrics incomplete: expected {expected}, got {got}")]
    MissingEdgeMetric { expected: usize, got: usize },

    #[error("training failed: {0}")]
    Training(String),

    #[error("replicate {replicate} failed: {source}")]
    ReplicateFailed {
        replicate: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("model checkpoint is invalid: {0}")]
    InvalidCheckpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
