//! Row RNN over the table and the operand selector built on top of it.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Axis, Graph, ParamId, ParamKind, ParameterStore, Var};
use crate::encoders::EncodedTable;
use crate::error::{Error, Result};
use crate::selru::StepSelection;

/// Row vectors `[d_r, n]` and the table vector `[d_r, 1]`.
#[derive(Clone, Copy, Debug)]
pub struct RowState {
    pub rows: Var,
    pub table: Var,
}

#[derive(Clone, Debug)]
pub struct RowRnn {
    pub weight: ParamId,
    pub bias: ParamId,
    pub selection_dim: usize,
    pub cell_dim: usize,
    pub row_dim: usize,
}

impl RowRnn {
    /// `selection_dim` is the combined width of `[f̃; ṽ; p̃]`.
    pub fn new(
        store: &mut ParameterStore,
        selection_dim: usize,
        cell_dim: usize,
        row_dim: usize,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let input = selection_dim + cell_dim + 2 * row_dim;
        Ok(Self {
            weight: store.xavier("rows.w", ParamKind::Weight, row_dim, input, rng)?,
            bias: store.zeros("rows.b", ParamKind::Bias, row_dim, 1)?,
            selection_dim,
            cell_dim,
            row_dim,
        })
    }

    pub fn initial(&self, g: &mut Graph, n: usize) -> RowState {
        RowState {
            rows: g.tape.zeros(self.row_dim, n),
            table: g.tape.zeros(self.row_dim, 1),
        }
    }

    pub fn row_step(&self, g: &mut Graph, sel: &StepSelection, table: &EncodedTable, prev: RowState) -> Result<RowState> {
        let n = table.rows;
        if n == 0 {
            return Err(Error::Contract("row step over a table without rows".into()));
        }
        if g.tape.shape(prev.rows) != [self.row_dim, n] || g.tape.shape(prev.table) != [self.row_dim, 1] {
            return Err(Error::Contract(format!(
                "previous row state {:?} does not match {} rows of width {}",
                g.tape.shape(prev.rows),
                n,
                self.row_dim
            )));
        }
        let selected = g.tape.concat(&[sel.field, sel.pivot_vec, sel.param_vec], Axis::Rows)?;
        if g.tape.shape(selected)[0] != self.selection_dim {
            return Err(Error::Contract("selection width does not match the row RNN".into()));
        }
        let weighted = g.tape.group_weighted_sum(table.cells, sel.column, n)?;

        let (s, c, r) = (self.selection_dim, self.cell_dim, self.row_dim);
        let w = g.p(self.weight);
        let b = g.p(self.bias);
        let w_sel = g.tape.slice_cols(w, 0, s)?;
        let w_cell = g.tape.slice_cols(w, s, c)?;
        let w_row = g.tape.slice_cols(w, s + c, r)?;
        let w_tab = g.tape.slice_cols(w, s + c + r, r)?;

        let shared = g.tape.matmul(w_sel, selected)?;
        let from_table = g.tape.matmul(w_tab, prev.table)?;
        let shared = g.tape.add(shared, from_table)?;
        let shared = g.tape.add(shared, b)?;
        let shared = g.tape.repeat_cols(shared, n)?;
        let per_row = g.tape.matmul(w_cell, weighted)?;
        let recur = g.tape.matmul(w_row, prev.rows)?;
        let pre = g.tape.add(per_row, recur)?;
        let pre = g.tape.add(pre, shared)?;
        let rows = g.tape.tanh(pre);
        let table_vec = g.tape.row_max(rows)?;
        Ok(RowState { rows, table: table_vec })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "mode")]
pub enum RowScoring {
    /// One logistic unit applied to every row.
    Shared,
    /// A single layer over all rows flattened and zero-padded to `max_rows`.
    Concat { max_rows: usize },
}

#[derive(Clone, Debug)]
pub struct RowScorer {
    pub mode: RowScoring,
    pub weight: ParamId,
    pub bias: ParamId,
    pub row_dim: usize,
}

impl RowScorer {
    pub fn new(store: &mut ParameterStore, mode: RowScoring, row_dim: usize, rng: &mut impl Rng) -> Result<Self> {
        let (weight, bias) = match mode {
            RowScoring::Shared => (
                store.xavier("score.w", ParamKind::Weight, 1, row_dim, rng)?,
                store.zeros("score.b", ParamKind::Bias, 1, 1)?,
            ),
            RowScoring::Concat { max_rows } => {
                if max_rows == 0 {
                    return Err(Error::Config("max_rows must be positive".into()));
                }
                (
                    store.xavier("score.w", ParamKind::Weight, max_rows, max_rows * row_dim, rng)?,
                    store.zeros("score.b", ParamKind::Bias, max_rows, 1)?,
                )
            }
        };
        Ok(Self {
            mode,
            weight,
            bias,
            row_dim,
        })
    }

    /// Row scores `[n, 1]`, each in (0, 1).
    pub fn score_rows(&self, g: &mut Graph, rows: Var) -> Result<Var> {
        let [d, n] = g.tape.shape(rows);
        if d != self.row_dim {
            return Err(Error::Contract(format!("row vectors have width {d}, expected {}", self.row_dim)));
        }
        let rows = g.dropout(rows)?;
        let w = g.p(self.weight);
        let b = g.p(self.bias);
        match self.mode {
            RowScoring::Shared => {
                let z = g.tape.matmul(w, rows)?;
                let bias = g.tape.repeat_cols(b, n)?;
                let z = g.tape.add(z, bias)?;
                let p = g.tape.sigmoid(z);
                Ok(g.tape.transpose(p))
            }
            RowScoring::Concat { max_rows } => {
                if n > max_rows {
                    return Err(Error::Capacity(format!("table has {n} rows but the row scorer holds {max_rows}")));
                }
                let t = g.tape.transpose(rows);
                let flat = g.tape.reshape(t, n * d, 1)?;
                let flat = if n < max_rows {
                    let pad = g.tape.zeros((max_rows - n) * d, 1);
                    g.tape.concat(&[flat, pad], Axis::Rows)?
                } else {
                    flat
                };
                let z = g.tape.matmul(w, flat)?;
                let z = g.tape.add(z, b)?;
                let p = g.tape.sigmoid(z);
                g.tape.slice_rows(p, 0, n)
            }
        }
    }
}

/// `C = p · a_fᵀ`: `[n, 1] × [m, 1] -> [n, m]`.
pub fn cell_scores(g: &mut Graph, row_scores: Var, column: Var) -> Result<Var> {
    let t = g.tape.transpose(column);
    g.tape.matmul(row_scores, t)
}

/// Cells selected as operands, in row-major order.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OperandSet(pub Vec<(usize, usize)>);

impl OperandSet {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &(usize, usize)> {
        self.0.iter()
    }

    pub fn contains(&self, cell: (usize, usize)) -> bool {
        self.0.contains(&cell)
    }
}

/// Cells of the row-major `[n, m]` score matrix strictly above `gamma`.
pub fn threshold_operands(scores: &[f64], cols: usize, gamma: f64) -> Result<OperandSet> {
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(Error::Config(format!("threshold {gamma} must lie strictly between 0 and 1")));
    }
    if cols == 0 || scores.len() % cols != 0 {
        return Err(Error::Contract(format!("{} scores do not form rows of {cols}", scores.len())));
    }
    Ok(OperandSet(
        scores
            .iter()
            .enumerate()
            .filter(|(_, &c)| c > gamma)
            .map(|(i, _)| (i / cols, i % cols))
            .collect(),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn threshold_examples() {
        let c = [0.9, 0.2, 0.6, 0.4];
        assert_eq!(threshold_operands(&c, 2, 0.5).unwrap().0, vec![(0, 0), (1, 0)]);
        assert!(threshold_operands(&[0.5], 1, 0.5).unwrap().is_empty());
        assert!(threshold_operands(&c, 2, 1.0).is_err());
        assert!(threshold_operands(&c, 2, 0.0).is_err());
    }

    #[test]
    fn one_hot_outer_product() {
        let store = ParameterStore::new();
        let mut g = Graph::new(&store);
        let p = g.tape.column(vec![1.0, 0.0]);
        let a = g.tape.column(vec![0.0, 1.0]);
        let c = cell_scores(&mut g, p, a).unwrap();
        assert_eq!(g.tape.data(c), &[0.0, 1.0, 0.0, 0.0]);
        let z = g.tape.zeros(3, 1);
        let c = cell_scores(&mut g, z, a).unwrap();
        assert!(g.tape.data(c).iter().all(|&x| x == 0.0));
    }
}
