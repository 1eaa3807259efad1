use crate::encoders::{normalize, Cell, Table};
use crate::error::{Error, Result};
use crate::opsolver::{hard_op, Answer};
use crate::rowsel::OperandSet;

use super::logical_form::{Comparator, Condition, LogicalForm, Value};

/// Whether one cell satisfies one condition. Numbers compare numerically;
/// `=` on text compares normalized strings; anything else fails.
pub fn condition_holds(cond: &Condition, cell: &Cell) -> bool {
    match (&cond.value, cell.numeric) {
        (Value::Num(v), Some(x)) => cond.cmp.holds(x, *v),
        (Value::Text(s), _) if cond.cmp == Comparator::Eq => normalize(s) == cell.normalized(),
        _ => false,
    }
}

fn bind(table: &Table, column: &str) -> Result<usize> {
    table
        .column_index(column)
        .ok_or_else(|| Error::Binding(column.to_string()))
}

/// Gold operand cells and answer of a logical form over a table.
pub fn oracle_execute(lf: &LogicalForm, table: &Table) -> Result<(OperandSet, Answer)> {
    let target = bind(table, &lf.target)?;
    let conds = lf
        .conditions
        .iter()
        .map(|c| Ok((bind(table, &c.column)?, c)))
        .collect::<Result<Vec<_>>>()?;
    let operands = OperandSet(
        (0..table.n_rows())
            .filter(|&j| conds.iter().all(|(k, c)| condition_holds(c, table.cell(j, *k))))
            .map(|j| (j, target))
            .collect(),
    );
    let answer = hard_op(lf.op, &operands, table)?;
    Ok((operands, answer))
}
