use serde::{Deserialize, Serialize};

use crate::autodiff::Graph;
use crate::dataspace::Example;
use crate::encoders::Table;
use crate::error::{Error, Result};
use crate::model::OperandModel;
use crate::opsolver::{Answer, Operation};
use crate::rowsel::OperandSet;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub name: String,
    pub weight: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceStep {
    pub timestep: usize,
    pub columns: Vec<TraceEntry>,
    pub pivots: Vec<TraceEntry>,
    pub params: Vec<TraceEntry>,
}

/// Top-weighted selections per timestep and the final decision.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    pub id: String,
    pub question: String,
    pub steps: Vec<TraceStep>,
    pub operations: Vec<TraceEntry>,
    pub operation: Operation,
    pub cell_scores: Vec<Vec<f64>>,
    pub operands: OperandSet,
    pub answer: Option<Answer>,
}

fn top_k(names: &[String], weights: &[f64], k: usize) -> Vec<TraceEntry> {
    let mut idx: Vec<usize> = (0..weights.len()).collect();
    idx.sort_by(|&a, &b| weights[b].total_cmp(&weights[a]).then(a.cmp(&b)));
    idx.into_iter()
        .take(k)
        .map(|i| TraceEntry {
            name: names[i].clone(),
            weight: weights[i],
        })
        .collect()
}

pub fn dump_trace(model: &OperandModel, ex: &Example, table: &Table, k: usize, gamma: f64) -> Result<Trace> {
    if k == 0 {
        return Err(Error::Config("trace needs k >= 1".into()));
    }
    let tokens = model.tokens(&ex.question)?;
    let words: Vec<String> = tokens.iter().map(|t| t.text.clone()).collect();
    let mut g = Graph::new(&model.store);
    let fwd = model.forward(&mut g, &tokens, table)?;
    let pred = model.decide(&g, &fwd, table, gamma)?;
    let steps = fwd
        .steps
        .iter()
        .enumerate()
        .map(|(t, s)| TraceStep {
            timestep: t + 1,
            columns: top_k(table.headers(), g.tape.data(s.column), k),
            pivots: top_k(&words, g.tape.data(s.pivot), k),
            params: top_k(&words, g.tape.data(s.param), k),
        })
        .collect();
    let op_names: Vec<String> = model.operations().iter().map(|o| o.to_string()).collect();
    let m = table.n_cols();
    Ok(Trace {
        id: ex.id.clone(),
        question: ex.question.clone(),
        steps,
        operations: top_k(&op_names, &pred.op_weights, op_names.len()),
        operation: pred.operation,
        cell_scores: pred.cell_scores.chunks(m).map(|r| r.to_vec()).collect(),
        operands: pred.operands,
        answer: pred.answer,
    })
}

fn entries(list: &[TraceEntry]) -> String {
    list.iter()
        .map(|e| format!("{}:{}", e.name, e.weight))
        .collect::<Vec<_>>()
        .join(" ; ")
}

/// Aligned plain-text form: one line per timestep laid out as
/// `timestep | column:weight | pivot:weight | param:weight`.
pub fn render_trace_text(t: &Trace) -> String {
    let mut out = format!("id: {}\nquestion: {}\n", t.id, t.question);
    out.push_str("timestep | column:weight | pivot:weight | param:weight\n");
    for s in &t.steps {
        out.push_str(&format!(
            "{} | {} | {} | {}\n",
            s.timestep,
            entries(&s.columns),
            entries(&s.pivots),
            entries(&s.params)
        ));
    }
    out.push_str(&format!("operations | {}\n", entries(&t.operations)));
    out.push_str(&format!("operation: {}\n", t.operation));
    out.push_str(&format!("operands: {}\n", serde_json::to_string(&t.operands).expect("operands serialize")));
    out.push_str(&format!("answer: {}\n", serde_json::to_string(&t.answer).expect("answer serializes")));
    out.push_str("cells:\n");
    for row in &t.cell_scores {
        out.push_str(&row.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(" "));
        out.push('\n');
    }
    out
}

fn bad(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse { pos: line, msg: msg.into() }
}

fn parse_entries(text: &str, line: usize) -> Result<Vec<TraceEntry>> {
    let text = text.trim();
    if text.is_empty() {
        return Ok(vec![]);
    }
    text.split(" ; ")
        .map(|e| {
            let (name, w) = e.rsplit_once(':').ok_or_else(|| bad(line, format!("entry `{e}` has no weight")))?;
            Ok(TraceEntry {
                name: name.to_string(),
                weight: w.parse().map_err(|_| bad(line, format!("bad weight `{w}`")))?,
            })
        })
        .collect()
}

/// Inverse of [`render_trace_text`]; `pos` in errors is the line number.
pub fn parse_trace_text(text: &str) -> Result<Trace> {
    let lines: Vec<&str> = text.lines().collect();
    let field = |i: usize, key: &str| -> Result<&str> {
        lines
            .get(i)
            .and_then(|l| l.strip_prefix(key))
            .ok_or_else(|| bad(i + 1, format!("expected `{key}`")))
    };
    let id = field(0, "id: ")?.to_string();
    let question = field(1, "question: ")?.to_string();
    if lines.get(2) != Some(&"timestep | column:weight | pivot:weight | param:weight") {
        return Err(bad(3, "missing timestep header"));
    }
    let mut i = 3;
    let mut steps = Vec::new();
    while let Some(line) = lines.get(i) {
        if line.starts_with("operations | ") || *line == "operations |" {
            break;
        }
        let parts: Vec<&str> = line.split(" | ").collect();
        if parts.len() != 4 {
            return Err(bad(i + 1, "timestep line needs four fields"));
        }
        steps.push(TraceStep {
            timestep: parts[0].trim().parse().map_err(|_| bad(i + 1, "bad timestep"))?,
            columns: parse_entries(parts[1], i + 1)?,
            pivots: parse_entries(parts[2], i + 1)?,
            params: parse_entries(parts[3], i + 1)?,
        });
        i += 1;
    }
    let operations = parse_entries(field(i, "operations |")?, i + 1)?;
    let operation = field(i + 1, "operation: ")?.parse()?;
    let operands = serde_json::from_str(field(i + 2, "operands: ")?)?;
    let answer = serde_json::from_str(field(i + 3, "answer: ")?)?;
    if lines.get(i + 4) != Some(&"cells:") {
        return Err(bad(i + 5, "missing cells block"));
    }
    let cell_scores = lines[i + 5..]
        .iter()
        .enumerate()
        .map(|(r, l)| {
            l.split(' ')
                .filter(|s| !s.is_empty())
                .map(|v| v.parse::<f64>().map_err(|_| bad(i + 6 + r, format!("bad score `{v}`"))))
                .collect()
        })
        .collect::<Result<Vec<Vec<f64>>>>()?;
    Ok(Trace {
        id,
        question,
        steps,
        operations,
        operation,
        cell_scores,
        operands,
        answer,
    })
}
