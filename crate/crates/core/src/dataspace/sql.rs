use std::sync::OnceLock;

use regex::Regex;

use crate::encoders::Table;
use crate::error::{Error, Result};
use crate::opsolver::Operation;

use super::dataset::Example;
use super::logical_form::{Comparator, Condition, LogicalForm, Value};
use super::oracle::oracle_execute;

/// `SELECT [AGG](column) [FROM t] [WHERE a = 1 AND b > 2]`.
#[derive(Clone, Debug, PartialEq)]
pub struct SqlQuery {
    pub aggregate: Option<String>,
    pub column: String,
    pub conditions: Vec<Condition>,
}

fn unsupported(msg: impl Into<String>) -> Error {
    Error::Conversion(msg.into())
}

fn select_re() -> &'static Regex {
    static R: OnceLock<Regex> = OnceLock::new();
    R.get_or_init(|| {
        Regex::new(
            r"(?is)^\s*select\s+(?:(?P<agg>[a-z_]+)\s*\(\s*(?P<acol>[^()]+?)\s*\)|(?P<col>[^()]+?))(?:\s+from\s+(?P<from>\S+))?(?:\s+where\s+(?P<where>.+?))?\s*;?\s*$",
        )
        .expect("select regex")
    })
}

fn condition_re() -> &'static Regex {
    static R: OnceLock<Regex> = OnceLock::new();
    R.get_or_init(|| Regex::new(r"^\s*(?P<col>.+?)\s*(?P<cmp>>=|<=|≥|≤|=|>|<)\s*(?P<val>.+?)\s*$").expect("condition regex"))
}

pub fn parse_sql(text: &str) -> Result<SqlQuery> {
    let lower = text.to_ascii_lowercase();
    for kw in [" join ", " group by ", " order by ", " having ", " limit ", " union ", " or ", "!=", "<>", " distinct "] {
        if lower.contains(kw) {
            return Err(unsupported(format!("`{}` is outside the supported SELECT shape", kw.trim())));
        }
    }
    let c = select_re()
        .captures(text)
        .ok_or_else(|| unsupported(format!("`{text}` is not a single-table SELECT")))?;
    let (aggregate, column) = match (c.name("agg"), c.name("acol"), c.name("col")) {
        (Some(a), Some(col), _) => (Some(a.as_str().to_ascii_uppercase()), col.as_str()),
        (_, _, Some(col)) => (None, col.as_str()),
        _ => return Err(unsupported("missing selected column")),
    };
    if column.contains(['*', ',']) {
        return Err(unsupported("only one named column may be selected"));
    }
    let mut conditions = Vec::new();
    if let Some(w) = c.name("where") {
        let and = Regex::new(r"(?i)\s+and\s+").expect("and regex");
        for part in and.split(w.as_str()) {
            let cc = condition_re()
                .captures(part)
                .ok_or_else(|| unsupported(format!("condition `{part}` is not `column op value`")))?;
            let cmp = match &cc["cmp"] {
                ">=" | "≥" => Comparator::Ge,
                "<=" | "≤" => Comparator::Le,
                ">" => Comparator::Gt,
                "<" => Comparator::Lt,
                _ => Comparator::Eq,
            };
            let raw = cc["val"].trim();
            let value = match raw.strip_prefix('\'').and_then(|s| s.strip_suffix('\'')) {
                Some(quoted) => Value::Text(quoted.to_string()),
                None => Value::parse(raw),
            };
            conditions.push(Condition {
                column: cc["col"].trim_matches('"').to_string(),
                cmp,
                value,
            });
        }
    }
    Ok(SqlQuery {
        aggregate,
        column: column.trim_matches('"').to_string(),
        conditions,
    })
}

/// Drop the aggregate to find operand cells and keep it as the operation.
pub fn sql_to_logical_form(q: &SqlQuery) -> Result<LogicalForm> {
    let op = match q.aggregate.as_deref() {
        None => Operation::All,
        Some("SUM") => Operation::Sum,
        Some("COUNT") => Operation::Count,
        Some("MIN") => Operation::Min,
        Some("MAX") => Operation::Max,
        Some("AVG") => Operation::Mean,
        Some(other) => return Err(unsupported(format!("aggregate {other} has no matching operation"))),
    };
    Ok(LogicalForm {
        op,
        target: q.column.clone(),
        conditions: q.conditions.clone(),
    })
}

pub fn convert_sql_annotation(id: &str, question: &str, sql: &str, table_id: &str, table: &Table) -> Result<Example> {
    let lf = sql_to_logical_form(&parse_sql(sql)?)?;
    let (operands, answer) = oracle_execute(&lf, table)?;
    Ok(Example {
        id: id.to_string(),
        question: question.to_string(),
        table_id: table_id.to_string(),
        logical_form: lf,
        operands,
        answer,
    })
}
