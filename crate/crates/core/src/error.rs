use thiserror::Error;

use crate::fairness::Class;

#[derive(Error, Debug)]
pub enum Error {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("unknown dataset schema `{0}`")]
    UnknownSchema(String),

    #[error("sensitive column `{0}` not found in input")]
    MissingSensitiveColumn(String),

    #[error("column `{0}` not found in input")]
    MissingColumn(String),

    #[error("label column `{column}` is not binary (found {found} distinct values)")]
    NonBinaryLabel { column: String, found: usize },

    #[error("group {group} has no samples after filtering")]
    EmptyGroup { group: usize },

    #[error("malformed row {row}: {reason}")]
    MalformedRow { row: usize, reason: String },

    #[error("feature vector has length {got}, expected {expected}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("group id {group} out of range 1..={k}")]
    GroupOutOfRange { group: usize, k: usize },

    #[error("parameter vector layout (k={got_k}, d'={got_dp}) does not match spec (k={k}, d'={dp})")]
    LayoutMismatch {
        k: usize,
        dp: usize,
        got_k: usize,
        got_dp: usize,
    },

    #[error("(group {group}, label {label}) cell has {count} samples, fewer than {folds} folds")]
    CellTooSmall {
        group: usize,
        label: i8,
        count: usize,
        folds: usize,
    },

    #[error("group {group} has no samples with label {class}; fairness constraint infeasible")]
    EmptyClassCell { group: usize, class: Class },

    #[error("constraint system is over-determined: rank {rank} >= dimension {dim}")]
    Overconstrained { rank: usize, dim: usize },

    #[error("solver did not converge within {iterations} iterations")]
    NotConverged { iterations: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("{0}")]
    Other(String),
}

pub type Result<T> = std::result::Result<T, Error>;
