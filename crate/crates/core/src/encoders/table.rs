use std::path::Path;

use super::number::parse_number;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Cell {
    pub raw: String,
    pub numeric: Option<f64>,
}

impl Cell {
    pub fn new(raw: impl Into<String>) -> Self {
        let raw = raw.into();
        let numeric = parse_number(raw.trim());
        Self { raw, numeric }
    }

    /// Whitespace-collapsed, lowercased form used for matching and as the
    /// cell's vocabulary token.
    pub fn normalized(&self) -> String {
        normalize(&self.raw)
    }
}

pub fn normalize(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase()
}

/// Rectangular grid of cells under a header row.
#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    headers: Vec<String>,
    rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new<S: Into<String>>(headers: Vec<S>, rows: Vec<Vec<String>>) -> Result<Self> {
        let headers: Vec<String> = headers.into_iter().map(Into::into).collect();
        if headers.is_empty() {
            return Err(Error::Format("table has no columns".into()));
        }
        let m = headers.len();
        let rows = rows
            .into_iter()
            .enumerate()
            .map(|(j, r)| {
                if r.len() != m {
                    return Err(Error::Format(format!(
                        "row {j} has {} cells, expected {m}",
                        r.len()
                    )));
                }
                Ok(r.into_iter().map(Cell::new).collect())
            })
            .collect::<Result<Vec<Vec<Cell>>>>()?;
        Ok(Self { headers, rows })
    }

    pub fn headers(&self) -> &[String] {
        &self.headers
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn n_cols(&self) -> usize {
        self.headers.len()
    }

    pub fn cell(&self, row: usize, col: usize) -> &Cell {
        &self.rows[row][col]
    }

    pub fn row(&self, row: usize) -> &[Cell] {
        &self.rows[row]
    }

    pub fn rows(&self) -> &[Vec<Cell>] {
        &self.rows
    }

    pub fn set_cell(&mut self, row: usize, col: usize, raw: impl Into<String>) {
        self.rows[row][col] = Cell::new(raw);
    }

    /// Case- and whitespace-insensitive header lookup.
    pub fn column_index(&self, name: &str) -> Option<usize> {
        let key = normalize(name);
        self.headers.iter().position(|h| normalize(h) == key)
    }

    pub fn column_is_numeric(&self, col: usize) -> bool {
        !self.rows.is_empty() && self.rows.iter().all(|r| r[col].numeric.is_some())
    }

    pub fn from_csv_str(text: &str) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .flexible(true)
            .from_reader(text.as_bytes());
        let headers: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
        let mut rows = Vec::new();
        for rec in rdr.records() {
            rows.push(rec?.iter().map(str::to_string).collect());
        }
        Self::new(headers, rows)
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut w = csv::WriterBuilder::new().from_writer(Vec::new());
        w.write_record(&self.headers)?;
        for r in &self.rows {
            w.write_record(r.iter().map(|c| c.raw.as_str()))?;
        }
        let bytes = w
            .into_inner()
            .map_err(|e| Error::Format(format!("csv flush: {e}")))?;
        String::from_utf8(bytes).map_err(|e| Error::Format(e.to_string()))
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        Self::from_csv_str(&std::fs::read_to_string(path)?)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv_string()?)?;
        Ok(())
    }
}
