use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::encoders::{tokenize, Table, Vocabulary};
use crate::error::{Error, Result};
use crate::opsolver::Answer;
use crate::rowsel::OperandSet;

use super::logical_form::LogicalForm;
use super::oracle::oracle_execute;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Example {
    pub id: String,
    pub question: String,
    pub table_id: String,
    pub logical_form: LogicalForm,
    pub operands: OperandSet,
    pub answer: Answer,
}

impl Example {
    /// Row-major 0/1 operand indicator over an `[n, m]` table.
    pub fn indicator(&self, rows: usize, cols: usize) -> Vec<f64> {
        let mut out = vec![0.0; rows * cols];
        for &(r, c) in self.operands.iter() {
            if r < rows && c < cols {
                out[r * cols + c] = 1.0;
            }
        }
        out
    }
}

pub type Tables = BTreeMap<String, Table>;

/// Examples plus the tables they refer to.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Dataset {
    pub tables: Tables,
    pub examples: Vec<Example>,
}

impl Dataset {
    pub fn table(&self, ex: &Example) -> Result<&Table> {
        self.tables
            .get(&ex.table_id)
            .ok_or_else(|| Error::Format(format!("example {} refers to missing table {}", ex.id, ex.table_id)))
    }

    /// Keep only the tables some example uses.
    pub fn prune_tables(&mut self) {
        let used: std::collections::BTreeSet<&str> = self.examples.iter().map(|e| e.table_id.as_str()).collect();
        self.tables.retain(|k, _| used.contains(k.as_str()));
    }

    pub fn load(jsonl: &Path, tables_dir: &Path) -> Result<Self> {
        Ok(Self {
            tables: read_tables(tables_dir)?,
            examples: read_jsonl(jsonl)?,
        })
    }
}

/// Oracle-consistency check: every example's operands and answer must be
/// exactly what its logical form produces on its table.
pub fn validate(examples: &[Example], tables: &Tables) -> Result<()> {
    let bad: Vec<String> = examples
        .iter()
        .filter(|ex| !is_consistent(ex, tables))
        .map(|ex| ex.id.clone())
        .collect();
    if bad.is_empty() {
        Ok(())
    } else {
        Err(Error::Validation { ids: bad })
    }
}

pub fn is_consistent(ex: &Example, tables: &Tables) -> bool {
    let Some(table) = tables.get(&ex.table_id) else {
        return false;
    };
    matches!(oracle_execute(&ex.logical_form, table), Ok((ops, ans)) if ops == ex.operands && ans == ex.answer)
}

pub fn to_jsonl(examples: &[Example]) -> Result<String> {
    let mut out = String::new();
    for ex in examples {
        out.push_str(&serde_json::to_string(ex)?);
        out.push('\n');
    }
    Ok(out)
}

pub fn write_jsonl(path: &Path, examples: &[Example]) -> Result<()> {
    let mut f = fs::File::create(path)?;
    f.write_all(to_jsonl(examples)?.as_bytes())?;
    Ok(())
}

pub fn read_jsonl(path: &Path) -> Result<Vec<Example>> {
    let f = BufReader::new(fs::File::open(path)?);
    let mut out = Vec::new();
    for (i, line) in f.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let ex = serde_json::from_str(&line)
            .map_err(|e| Error::Format(format!("{}:{}: {e}", path.display(), i + 1)))?;
        out.push(ex);
    }
    Ok(out)
}

pub fn write_tables(dir: &Path, tables: &Tables) -> Result<()> {
    fs::create_dir_all(dir)?;
    for (id, t) in tables {
        t.write_csv(&dir.join(format!("{id}.csv")))?;
    }
    Ok(())
}

pub fn read_tables(dir: &Path) -> Result<Tables> {
    let mut out = Tables::new();
    let mut entries: Vec<_> = fs::read_dir(dir)?.collect::<std::io::Result<_>>()?;
    entries.sort_by_key(|e| e.file_name());
    for e in entries {
        let path = e.path();
        if path.extension().and_then(|s| s.to_str()) != Some("csv") {
            continue;
        }
        let id = path.file_stem().and_then(|s| s.to_str()).unwrap_or_default().to_string();
        out.insert(id, Table::read_csv(&path)?);
    }
    Ok(out)
}

/// Vocabulary over question tokens, header tokens and normalized cells.
pub fn build_vocabulary<'a>(examples: impl IntoIterator<Item = &'a Example>, tables: &Tables) -> Vocabulary {
    let mut words: Vec<String> = Vec::new();
    for ex in examples {
        words.extend(tokenize(&ex.question).into_iter().map(|t| t.text));
    }
    for t in tables.values() {
        for h in t.headers() {
            words.extend(tokenize(h).into_iter().map(|t| t.text));
        }
        for c in t.rows().iter().flatten() {
            words.push(c.normalized());
        }
    }
    Vocabulary::build(words)
}
