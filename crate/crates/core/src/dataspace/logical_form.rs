use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::encoders::parse_number;
use crate::error::{Error, Result};
use crate::opsolver::Operation;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Comparator {
    Eq,
    Gt,
    Lt,
    Ge,
    Le,
}

impl Comparator {
    pub const ALL: [Comparator; 5] = [Comparator::Eq, Comparator::Gt, Comparator::Lt, Comparator::Ge, Comparator::Le];

    pub fn symbol(self) -> &'static str {
        match self {
            Comparator::Eq => "=",
            Comparator::Gt => ">",
            Comparator::Lt => "<",
            Comparator::Ge => ">=",
            Comparator::Le => "<=",
        }
    }

    pub fn holds(self, lhs: f64, rhs: f64) -> bool {
        match self {
            Comparator::Eq => lhs == rhs,
            Comparator::Gt => lhs > rhs,
            Comparator::Lt => lhs < rhs,
            Comparator::Ge => lhs >= rhs,
            Comparator::Le => lhs <= rhs,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Value {
    Num(f64),
    Text(String),
}

impl Value {
    /// Numbers when the text satisfies the number grammar, else text.
    pub fn parse(text: &str) -> Self {
        match parse_number(text) {
            Some(x) => Value::Num(x),
            None => Value::Text(text.to_string()),
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Num(x) => write!(f, "{x}"),
            Value::Text(s) => f.write_str(s),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Condition {
    pub column: String,
    pub cmp: Comparator,
    pub value: Value,
}

/// `op(target|column cmp value, ...)`.
#[derive(Clone, Debug, PartialEq)]
pub struct LogicalForm {
    pub op: Operation,
    pub target: String,
    pub conditions: Vec<Condition>,
}

impl fmt::Display for LogicalForm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}({}", self.op, self.target)?;
        for (i, c) in self.conditions.iter().enumerate() {
            let sep = if i == 0 { "|" } else { "," };
            write!(f, "{sep}{}{}{}", c.column, c.cmp.symbol(), c.value)?;
        }
        f.write_str(")")
    }
}

fn parse_err(pos: usize, msg: impl Into<String>) -> Error {
    Error::Parse { pos, msg: msg.into() }
}

/// Trimmed sub-slice with its byte offset in the original text.
fn trimmed(text: &str, start: usize, end: usize) -> (usize, &str) {
    let raw = &text[start..end];
    let lead = raw.len() - raw.trim_start().len();
    (start + lead, raw.trim())
}

fn find_comparator(s: &str) -> Option<(usize, usize, Comparator)> {
    let (i, ch) = s.char_indices().find(|(_, c)| matches!(c, '=' | '>' | '<' | '≥' | '≤'))?;
    let rest = &s[i + ch.len_utf8()..];
    Some(match ch {
        '≥' => (i, ch.len_utf8(), Comparator::Ge),
        '≤' => (i, ch.len_utf8(), Comparator::Le),
        '>' if rest.starts_with('=') => (i, 2, Comparator::Ge),
        '<' if rest.starts_with('=') => (i, 2, Comparator::Le),
        '>' => (i, 1, Comparator::Gt),
        '<' => (i, 1, Comparator::Lt),
        _ => (i, 1, Comparator::Eq),
    })
}

fn unquote(s: &str) -> &str {
    for q in ['\'', '"'] {
        if s.len() >= 2 && s.starts_with(q) && s.ends_with(q) {
            return &s[1..s.len() - 1];
        }
    }
    s
}

pub fn parse_logical_form(text: &str) -> Result<LogicalForm> {
    let open = text.find('(').ok_or_else(|| parse_err(text.len(), "expected `(`"))?;
    let (op_pos, op_name) = trimmed(text, 0, open);
    if op_name.is_empty() {
        return Err(parse_err(op_pos, "missing operation name"));
    }
    let op: Operation = op_name.parse()?;
    let close = text.rfind(')').filter(|&c| c > open).ok_or_else(|| parse_err(text.len(), "expected `)`"))?;
    if !text[close + 1..].trim().is_empty() {
        return Err(parse_err(close + 1, "trailing text after `)`"));
    }
    let body_start = open + 1;
    let body = &text[body_start..close];
    let (target_end, conds) = match body.find('|') {
        Some(bar) => (body_start + bar, Some(body_start + bar + 1)),
        None => (close, None),
    };
    let (tpos, target) = trimmed(text, body_start, target_end);
    if target.is_empty() {
        return Err(parse_err(tpos, "missing target column"));
    }
    if let Some(i) = target.find([',', '=', '<', '>']) {
        return Err(parse_err(tpos + i, "unexpected character in target column"));
    }
    let mut conditions = Vec::new();
    if let Some(mut start) = conds {
        loop {
            let end = text[start..close].find(',').map_or(close, |i| start + i);
            let (cpos, cond) = trimmed(text, start, end);
            let (i, len, cmp) = find_comparator(cond).ok_or_else(|| parse_err(cpos, "condition needs a comparator"))?;
            let column = cond[..i].trim();
            if column.is_empty() {
                return Err(parse_err(cpos, "condition is missing its column"));
            }
            let value = unquote(cond[i + len..].trim());
            if value.is_empty() {
                return Err(parse_err(cpos + i + len, "condition is missing its value"));
            }
            conditions.push(Condition {
                column: column.to_string(),
                cmp,
                value: Value::parse(value),
            });
            if end == close {
                break;
            }
            start = end + 1;
        }
    }
    Ok(LogicalForm {
        op,
        target: target.to_string(),
        conditions,
    })
}

impl FromStr for LogicalForm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        parse_logical_form(s)
    }
}

impl Serialize for LogicalForm {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for LogicalForm {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}
