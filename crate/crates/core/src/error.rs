use thiserror::Error;

use crate::opsolver::Operation;

/// Errors raised anywhere in the engine.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {op}: {lhs:?} vs {rhs:?}")]
    Dimension {
        op: &'static str,
        lhs: [usize; 2],
        rhs: [usize; 2],
    },
    #[error("domain error in {op}: {detail}")]
    Domain { op: &'static str, detail: String },
    #[error("contract violated: {0}")]
    Contract(String),
    #[error("numeric failure: {0}")]
    Numeric(String),
    #[error("value {value} does not fit in {int_bits} integer bits")]
    EncodingOverflow { value: f64, int_bits: u32 },
    #[error("format error: {0}")]
    Format(String),
    #[error("parse error at byte {pos}: {msg}")]
    Parse { pos: usize, msg: String },
    #[error("unknown operation `{0}`")]
    UnknownOperation(String),
    #[error("column `{0}` is not in the table")]
    Binding(String),
    #[error("{op} needs numeric operands but cell ({row}, {col}) holds `{raw}`")]
    Semantics {
        op: Operation,
        row: usize,
        col: usize,
        raw: String,
    },
    #[error("{0} over an empty operand set")]
    EmptySelection(Operation),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("capacity exceeded: {0}")]
    Capacity(String),
    #[error("invalid generator config: {0}")]
    Generator(String),
    #[error("unsupported SQL annotation: {0}")]
    Conversion(String),
    #[error("{} example(s) disagree with the oracle: {}", ids.len(), ids.join(", "))]
    Validation { ids: Vec<String> },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
