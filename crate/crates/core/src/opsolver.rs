//! Operation selection and answer composition: differentiable soft
//! aggregates for training and exact set operators for prediction.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Axis, Graph, ParamId, ParamKind, ParameterStore, Var};
use crate::encoders::Table;
use crate::error::{Error, Result};
use crate::rowsel::OperandSet;

/// Stand-in for `-∞` when `all` takes part in the soft mixture.
pub const ALL_PENALTY: f64 = 1e4;
/// Floor on the soft count in the soft mean.
pub const MEAN_EPSILON: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Operation {
    All,
    Min,
    Max,
    Count,
    Sum,
    Mean,
    Range,
}

impl Operation {
    pub const ALL: [Operation; 7] = [
        Operation::All,
        Operation::Min,
        Operation::Max,
        Operation::Count,
        Operation::Sum,
        Operation::Mean,
        Operation::Range,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Operation::All => "all",
            Operation::Min => "min",
            Operation::Max => "max",
            Operation::Count => "count",
            Operation::Sum => "sum",
            Operation::Mean => "mean",
            Operation::Range => "range",
        }
    }

    /// True for every operation whose answer is a number.
    pub fn is_numeric(self) -> bool {
        self != Operation::All
    }

    /// True when operand cells must hold numbers.
    pub fn needs_numeric_cells(self) -> bool {
        !matches!(self, Operation::All | Operation::Count)
    }
}

impl fmt::Display for Operation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Operation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.trim().to_ascii_lowercase().as_str() {
            "all" | "print" => Operation::All,
            "min" => Operation::Min,
            "max" => Operation::Max,
            "count" => Operation::Count,
            "sum" => Operation::Sum,
            "mean" | "avg" | "average" => Operation::Mean,
            "range" => Operation::Range,
            _ => return Err(Error::UnknownOperation(s.to_string())),
        })
    }
}

/// Either a number or the raw strings of the selected cells.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Answer {
    Num(f64),
    Cells(Vec<String>),
}

impl Answer {
    pub fn as_num(&self) -> Option<f64> {
        match self {
            Answer::Num(x) => Some(*x),
            Answer::Cells(_) => None,
        }
    }
}

impl fmt::Display for Answer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Answer::Num(x) => write!(f, "{x}"),
            Answer::Cells(c) => write!(f, "[{}]", c.join(", ")),
        }
    }
}

/// Table values as numbers: non-numeric cells read as zero, and the
/// reversed grid `max − T + ε` is formed over numeric cells only.
#[derive(Clone, Debug, PartialEq)]
pub struct NumericGrid {
    pub rows: usize,
    pub cols: usize,
    pub values: Vec<f64>,
    pub mask: Vec<bool>,
    pub reversed: Vec<f64>,
    pub max: f64,
    pub epsilon: f64,
}

impl NumericGrid {
    pub fn from_values(rows: usize, cols: usize, cells: &[Option<f64>], epsilon: f64) -> Result<Self> {
        if cells.len() != rows * cols {
            return Err(Error::Contract(format!("{} cells for a {rows}x{cols} grid", cells.len())));
        }
        if !(epsilon > 0.0) {
            return Err(Error::Config(format!("reversal offset {epsilon} must be positive")));
        }
        let values: Vec<f64> = cells.iter().map(|c| c.unwrap_or(0.0)).collect();
        let mask: Vec<bool> = cells.iter().map(Option::is_some).collect();
        let max = cells
            .iter()
            .flatten()
            .copied()
            .fold(None, |m: Option<f64>, v| Some(m.map_or(v, |m| m.max(v))))
            .unwrap_or(0.0);
        let reversed = cells
            .iter()
            .map(|c| c.map_or(0.0, |v| max - v + epsilon))
            .collect();
        Ok(Self {
            rows,
            cols,
            values,
            mask,
            reversed,
            max,
            epsilon,
        })
    }

    pub fn from_table(table: &Table, epsilon: f64) -> Result<Self> {
        let cells: Vec<Option<f64>> = table.rows().iter().flatten().map(|c| c.numeric).collect();
        Self::from_values(table.n_rows(), table.n_cols(), &cells, epsilon)
    }
}

/// Learned operation embeddings plus the scoring network over `[o; q]`.
#[derive(Clone, Debug)]
pub struct OperationSelector {
    pub ops: Vec<Operation>,
    pub embeddings: ParamId,
    pub weight: ParamId,
    pub bias: ParamId,
    pub out: ParamId,
    pub op_dim: usize,
    pub query_dim: usize,
}

impl OperationSelector {
    pub fn new(
        store: &mut ParameterStore,
        ops: Vec<Operation>,
        op_dim: usize,
        query_dim: usize,
        hidden: usize,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        if ops.is_empty() {
            return Err(Error::Config("no operations registered".into()));
        }
        for (i, o) in ops.iter().enumerate() {
            if ops[..i].contains(o) {
                return Err(Error::Config(format!("operation {o} registered twice")));
            }
        }
        Ok(Self {
            embeddings: store.xavier("ops.embed", ParamKind::Embedding, op_dim, ops.len(), rng)?,
            weight: store.xavier("ops.w", ParamKind::Weight, hidden, op_dim + query_dim, rng)?,
            bias: store.zeros("ops.b", ParamKind::Bias, hidden, 1)?,
            out: store.xavier("ops.u", ParamKind::Weight, 1, hidden, rng)?,
            ops,
            op_dim,
            query_dim,
        })
    }

    /// Attention `[k, 1]` over the registered operations.
    pub fn select_operation(&self, g: &mut Graph, query: Var) -> Result<Var> {
        if g.tape.shape(query) != [self.query_dim, 1] {
            return Err(Error::Contract(format!(
                "query has shape {:?}, expected [{}, 1]",
                g.tape.shape(query),
                self.query_dim
            )));
        }
        let k = self.ops.len();
        let o = g.p(self.embeddings);
        let w = g.p(self.weight);
        let b = g.p(self.bias);
        let u = g.p(self.out);
        let w_op = g.tape.slice_cols(w, 0, self.op_dim)?;
        let w_q = g.tape.slice_cols(w, self.op_dim, self.query_dim)?;
        let per_op = g.tape.matmul(w_op, o)?;
        let shared = g.tape.matmul(w_q, query)?;
        let shared = g.tape.add(shared, b)?;
        let shared = g.tape.repeat_cols(shared, k)?;
        let pre = g.tape.add(per_op, shared)?;
        let hidden = g.tape.tanh(pre);
        let hidden = g.dropout(hidden)?;
        let e = g.tape.matmul(u, hidden)?;
        let e = g.tape.transpose(e);
        g.tape.softmax(e)
    }
}

fn grid_leaves(g: &mut Graph, grid: &NumericGrid, scores: Var) -> Result<(Var, Var)> {
    if g.tape.shape(scores) != [grid.rows, grid.cols] {
        return Err(Error::Contract(format!(
            "scores {:?} do not match the {}x{} grid",
            g.tape.shape(scores),
            grid.rows,
            grid.cols
        )));
    }
    let t = g.tape.leaf(grid.rows, grid.cols, grid.values.clone())?;
    let r = g.tape.leaf(grid.rows, grid.cols, grid.reversed.clone())?;
    Ok((t, r))
}

/// Soft value of one operation over cell scores `C [n, m]`. For `min` this
/// is the raw value over the reversed grid; see [`decode_min`].
pub fn soft_op(g: &mut Graph, op: Operation, scores: Var, grid: &NumericGrid) -> Result<Var> {
    let (t, rev) = grid_leaves(g, grid, scores)?;
    Ok(match op {
        Operation::All => g.tape.constant_scalar(-ALL_PENALTY),
        Operation::Count => g.tape.sum(scores),
        Operation::Sum => {
            let ct = g.tape.mul(scores, t)?;
            g.tape.sum(ct)
        }
        Operation::Max => {
            let ct = g.tape.mul(scores, t)?;
            g.tape.reduce_max(ct)?
        }
        Operation::Min => {
            let cr = g.tape.mul(scores, rev)?;
            g.tape.reduce_max(cr)?
        }
        Operation::Mean => {
            let ct = g.tape.mul(scores, t)?;
            let s = g.tape.sum(ct);
            let c = g.tape.sum(scores);
            let c = g.tape.clamp_min(c, MEAN_EPSILON);
            g.tape.div(s, c)?
        }
        Operation::Range => {
            let max = soft_op(g, Operation::Max, scores, grid)?;
            let raw = soft_op(g, Operation::Min, scores, grid)?;
            let min = decode_min(g, raw, grid);
            g.tape.sub(max, min)?
        }
    })
}

/// Undo the reversal: `max(T) + ε − raw`.
pub fn decode_min(g: &mut Graph, raw: Var, grid: &NumericGrid) -> Var {
    let neg = g.tape.neg(raw);
    g.tape.add_const(neg, grid.max + grid.epsilon)
}

/// Soft value of `op` in answer space, with `min` already decoded.
pub fn soft_answer(g: &mut Graph, op: Operation, scores: Var, grid: &NumericGrid) -> Result<Var> {
    let v = soft_op(g, op, scores, grid)?;
    Ok(if op == Operation::Min { decode_min(g, v, grid) } else { v })
}

/// Plain-number form of [`decode_min`], composed into a range when asked.
pub fn decode_extremum(op: Operation, raw: f64, max: f64, grid: &NumericGrid) -> Result<f64> {
    let min = grid.max + grid.epsilon - raw;
    match op {
        Operation::Min => Ok(min),
        Operation::Range => Ok(max - min),
        _ => Err(Error::Contract(format!("{op} is not a reversed extremum"))),
    }
}

/// Mixture `Σ a_o · op_o` over the registered operations; returns the
/// mixture and the per-operation soft answers.
pub fn soft_mixture(
    g: &mut Graph,
    ops: &[Operation],
    weights: Var,
    scores: Var,
    grid: &NumericGrid,
) -> Result<(Var, Vec<Var>)> {
    let mut parts = Vec::with_capacity(ops.len());
    for &op in ops {
        parts.push(soft_answer(g, op, scores, grid)?);
    }
    let v = g.tape.concat(&parts, Axis::Rows)?;
    let weighted = g.tape.mul(weights, v)?;
    Ok((g.tape.sum(weighted), parts))
}

/// Exact operator over a set of cells, in row-major order.
pub fn hard_op(op: Operation, operands: &OperandSet, table: &Table) -> Result<Answer> {
    if op == Operation::All {
        return Ok(Answer::Cells(
            operands.iter().map(|&(r, c)| table.cell(r, c).raw.clone()).collect(),
        ));
    }
    if operands.is_empty() {
        return Err(Error::EmptySelection(op));
    }
    if op == Operation::Count {
        return Ok(Answer::Num(operands.len() as f64));
    }
    let mut values = Vec::with_capacity(operands.len());
    for &(r, c) in operands.iter() {
        let cell = table.cell(r, c);
        match cell.numeric {
            Some(v) => values.push(v),
            None => {
                return Err(Error::Semantics {
                    op,
                    row: r,
                    col: c,
                    raw: cell.raw.clone(),
                })
            }
        }
    }
    Ok(Answer::Num(aggregate(op, &values)))
}

/// Exact numeric aggregate of a non-empty value list.
pub fn aggregate(op: Operation, values: &[f64]) -> f64 {
    let sum = || values.iter().fold(0.0, |a, &v| a + v);
    let max = || values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = || values.iter().copied().fold(f64::INFINITY, f64::min);
    match op {
        Operation::All => f64::NAN,
        Operation::Count => values.len() as f64,
        Operation::Sum => sum(),
        Operation::Mean => sum() / values.len() as f64,
        Operation::Max => max(),
        Operation::Min => min(),
        Operation::Range => max() - min(),
    }
}
