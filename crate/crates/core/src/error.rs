use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid dataset: {0}")]
    InvalidDataset(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid probability vector: {0}")]
    InvalidProbabilities(String),
    #[error("degenerate split: |D'| = {prime}, |D''| = {double_prime}")]
    DegenerateSplit { prime: usize, double_prime: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("labeled pool must contain both classes (S=0: {n0}, S=1: {n1})")]
    SingleClass { n0: usize, n1: usize },
    #[error("nonpositive or non-finite odds {value} at row {row}")]
    InvalidOdds { row: usize, value: f64 },
    #[error("score file: {0}")]
    ScoreFile(String),
    #[error("empty feasible beta grid for alpha = {alpha}")]
    EmptyBetaGrid { alpha: f64 },
    #[error("odds table has {got} rows, dataset has {expected}")]
    Misaligned { expected: usize, got: usize },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
