//! Crate-wide error type.

use crate::tree::NodeId;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Stochastic generation could not reach the requested minimum size.
    #[error(
        "tree generation failed: {attempts} attempts never reached min_size {min_size} \
         (largest tree produced had {largest} nodes)"
    )]
    Generation {
        attempts: usize,
        min_size: usize,
        largest: usize,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("task mismatch: {0}")]
    TaskMismatch(String),

    /// A non-finite value appeared during a forward pass.
    #[error("non-finite value at node {node} during forward pass")]
    NonFinite { node: NodeId },

    /// A parameter became non-finite after an optimizer update.
    #[error("parameter {index} became non-finite after an optimizer update")]
    Divergence { index: usize },

    #[error("empty dataset")]
    EmptyDataset,

    #[error("data error: {0}")]
    Data(String),

    #[error("csv parse error at line {line}: {message}")]
    CsvParse { line: usize, message: String },

    #[error("idx format error: {0}")]
    IdxFormat(String),

    #[error("model format error: {0}")]
    ModelFormat(String),

    #[error("metric undefined: {0}")]
    MetricUndefined(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
