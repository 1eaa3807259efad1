use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::encoders::Table;
use crate::error::{Error, Result};
use crate::opsolver::Operation;

use super::dataset::{Dataset, Example};
use super::generator::item_rng;
use super::oracle::oracle_execute;
use super::templates::{parse_question, render_question};

pub const MAX_ATTEMPTS: usize = 10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PerturbMode {
    /// Rewrite cells that cannot affect the answer.
    Vp,
    /// Swap the operation and recompute the answer.
    Op,
}

impl std::fmt::Display for PerturbMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            PerturbMode::Vp => "vp",
            PerturbMode::Op => "op",
        })
    }
}

impl std::str::FromStr for PerturbMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "vp" | "v-p" | "values" => Ok(PerturbMode::Vp),
            "op" | "o-p" | "operation" => Ok(PerturbMode::Op),
            _ => Err(Error::Config(format!("unknown perturbation `{s}` (expected vp or op)"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Perturbed {
    Done { example: Example, table: Option<(String, Table)> },
    Skipped { id: String, reason: String },
}

fn skipped(ex: &Example, reason: impl Into<String>) -> Perturbed {
    Perturbed::Skipped {
        id: ex.id.clone(),
        reason: reason.into(),
    }
}

/// Cells that are neither operands nor in a condition column.
pub fn eligible_cells(ex: &Example, table: &Table) -> Vec<(usize, usize)> {
    let cond_cols: BTreeSet<usize> = ex
        .logical_form
        .conditions
        .iter()
        .filter_map(|c| table.column_index(&c.column))
        .collect();
    let ops: BTreeSet<(usize, usize)> = ex.operands.iter().copied().collect();
    (0..table.n_rows())
        .flat_map(|j| (0..table.n_cols()).map(move |k| (j, k)))
        .filter(|&(j, k)| !cond_cols.contains(&k) && !ops.contains(&(j, k)))
        .collect()
}

fn resample(table: &Table, col: usize, avoid: Option<f64>, rng: &mut impl Rng) -> Option<String> {
    let cells: Vec<_> = (0..table.n_rows()).map(|j| table.cell(j, col)).collect();
    if cells.iter().all(|c| c.numeric.is_some()) {
        let vals: Vec<f64> = cells.iter().filter_map(|c| c.numeric).collect();
        let lo = vals.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let ints = vals.iter().all(|v| v.fract() == 0.0 && v.abs() < 1e15);
        for _ in 0..32 {
            let v = if ints {
                rng.gen_range(lo as i64..=hi as i64) as f64
            } else if lo < hi {
                rng.gen_range(lo..=hi)
            } else {
                lo
            };
            if Some(v) != avoid {
                return Some(format!("{v}"));
            }
        }
        None
    } else {
        let pool: BTreeSet<&str> = cells.iter().map(|c| c.raw.as_str()).collect();
        let pool: Vec<&str> = pool.into_iter().collect();
        pool.choose(rng).map(|s| s.to_string())
    }
}

/// Rewrite every eligible cell; the result must leave operands and answer
/// unchanged, otherwise retry with a fresh draw.
pub fn perturb_values(ex: &Example, table: &Table, seed: u64) -> Perturbed {
    let cells = eligible_cells(ex, table);
    if cells.is_empty() {
        return skipped(ex, "no cell can change without touching operands or conditions");
    }
    let avoid = ex.answer.as_num();
    for attempt in 0..MAX_ATTEMPTS {
        let mut rng = item_rng(seed, &format!("{}#vp{attempt}", ex.id));
        let mut t = table.clone();
        let mut ok = true;
        for &(j, k) in &cells {
            match resample(table, k, avoid, &mut rng) {
                Some(v) => t.set_cell(j, k, v),
                None => {
                    ok = false;
                    break;
                }
            }
        }
        if !ok {
            continue;
        }
        let same_operands = ex.operands.iter().all(|&(j, k)| t.cell(j, k).raw == table.cell(j, k).raw);
        match oracle_execute(&ex.logical_form, &t) {
            Ok((ops, ans)) if same_operands && ops == ex.operands && ans == ex.answer => {
                let table_id = format!("{}_vp_{}", ex.table_id, ex.id);
                let example = Example {
                    table_id: table_id.clone(),
                    ..ex.clone()
                };
                return Perturbed::Done {
                    example,
                    table: Some((table_id, t)),
                };
            }
            _ => continue,
        }
    }
    skipped(ex, format!("answer changed in all {MAX_ATTEMPTS} attempts"))
}

/// Replace a numeric operation with a different one, re-render the
/// question and recompute the answer over the same operands.
pub fn perturb_operation(ex: &Example, table: &Table, seed: u64) -> Result<Perturbed> {
    let lf = &ex.logical_form;
    if !lf.op.is_numeric() {
        return Ok(skipped(ex, "operation is not numeric"));
    }
    let target = table
        .column_index(&lf.target)
        .ok_or_else(|| Error::Binding(lf.target.clone()))?;
    if !table.column_is_numeric(target) {
        return Ok(skipped(ex, "target column is not numeric"));
    }
    let choices: Vec<Operation> = Operation::ALL
        .into_iter()
        .filter(|o| o.is_numeric() && *o != lf.op)
        .collect();
    let mut rng = item_rng(seed, &format!("{}#op", ex.id));
    let op = *choices.choose(&mut rng).expect("five alternatives");
    let variant = parse_question(&ex.question).map(|(_, v)| v).unwrap_or(0);
    let new_lf = super::logical_form::LogicalForm { op, ..lf.clone() };
    let (operands, answer) = oracle_execute(&new_lf, table)?;
    if operands != ex.operands {
        return Err(Error::Validation { ids: vec![ex.id.clone()] });
    }
    Ok(Perturbed::Done {
        example: Example {
            question: render_question(&new_lf, variant),
            logical_form: new_lf,
            answer,
            ..ex.clone()
        },
        table: None,
    })
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PerturbStatus {
    pub id: String,
    pub status: String,
    pub reason: String,
}

/// Perturbed dataset (only successfully perturbed examples) plus one
/// status row per input example.
pub fn perturb_dataset(data: &Dataset, mode: PerturbMode, seed: u64) -> Result<(Dataset, Vec<PerturbStatus>)> {
    let mut out = Dataset::default();
    let mut status = Vec::new();
    for ex in &data.examples {
        let table = data.table(ex)?;
        let p = match mode {
            PerturbMode::Vp => perturb_values(ex, table, seed),
            PerturbMode::Op => perturb_operation(ex, table, seed)?,
        };
        match p {
            Perturbed::Done { example, table: new_table } => {
                let t = match new_table {
                    Some((id, t)) => (id, t),
                    None => (ex.table_id.clone(), table.clone()),
                };
                out.tables.insert(t.0, t.1);
                status.push(PerturbStatus {
                    id: ex.id.clone(),
                    status: "perturbed".into(),
                    reason: String::new(),
                });
                out.examples.push(example);
            }
            Perturbed::Skipped { id, reason } => status.push(PerturbStatus {
                id,
                status: "skipped".into(),
                reason,
            }),
        }
    }
    Ok((out, status))
}
