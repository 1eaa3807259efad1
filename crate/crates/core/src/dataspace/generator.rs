use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::encoders::Table;
use crate::error::{Error, Result};
use crate::opsolver::Operation;

use super::dataset::{Example, Tables};
use super::logical_form::{Comparator, Condition, LogicalForm, Value};
use super::oracle::oracle_execute;
use super::templates::{render_question, variants};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColumnKind {
    /// Distinct per row, drawn from `values`.
    Key,
    /// Drawn from `values` with repetition.
    Category,
    /// Integers in `[min, max]`.
    Number,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ColumnSpec {
    pub name: String,
    pub kind: ColumnKind,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub values: Vec<String>,
    #[serde(default)]
    pub min: i64,
    #[serde(default)]
    pub max: i64,
}

impl ColumnSpec {
    fn number(name: &str, min: i64, max: i64) -> Self {
        Self {
            name: name.into(),
            kind: ColumnKind::Number,
            values: vec![],
            min,
            max,
        }
    }

    fn listed(name: &str, kind: ColumnKind, values: &[&str]) -> Self {
        Self {
            name: name.into(),
            kind,
            values: values.iter().map(|s| s.to_string()).collect(),
            min: 0,
            max: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GeneratorConfig {
    pub seed: u64,
    pub train: usize,
    pub dev: usize,
    pub test: usize,
    pub questions_per_table: usize,
    pub min_rows: usize,
    pub max_rows: usize,
    pub min_cols: usize,
    pub max_cols: usize,
    pub max_conditions: usize,
    /// Probability that a condition compares a numeric column.
    pub numeric_condition_rate: f64,
    /// Relative weight of each operation; quotas are apportioned exactly.
    pub op_mix: BTreeMap<Operation, f64>,
    pub columns: Vec<ColumnSpec>,
}

const PLAYERS: &[&str] = &[
    "Abreu", "Alonso", "Altuve", "Arenado", "Baez", "Betts", "Bichette", "Bogaerts", "Bregman", "Bryant", "Castro",
    "Correa", "Cruz", "Devers", "Freeman", "Gallo", "Goldschmidt", "Gordon", "Gurriel", "Harper", "Hoskins", "Judge",
    "Kepler", "Lindor", "Machado", "Marte", "Merrifield", "Moncada", "Muncy", "Olson", "Ozuna", "Polanco", "Ramirez",
    "Realmuto", "Rendon", "Riley", "Rizzo", "Santana", "Seager", "Semien", "Soler", "Soto", "Springer", "Story",
    "Suarez", "Tatis", "Torres", "Trout", "Turner", "Urshela", "Verdugo", "Villar", "Votto", "Walker", "Yelich",
];

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            seed: 7,
            train: 100,
            dev: 50,
            test: 50,
            questions_per_table: 5,
            min_rows: 8,
            max_rows: 20,
            min_cols: 4,
            max_cols: 8,
            max_conditions: 2,
            numeric_condition_rate: 0.0,
            op_mix: Operation::ALL.iter().map(|&o| (o, 1.0)).collect(),
            columns: vec![
                ColumnSpec::listed("Player", ColumnKind::Key, PLAYERS),
                ColumnSpec::listed("Team", ColumnKind::Category, &["NYY", "BOS", "LAD", "CHC", "HOU", "ATL"]),
                ColumnSpec::listed("Pos", ColumnKind::Category, &["RF", "LF", "CF", "SS", "1B", "2B", "3B", "C"]),
                ColumnSpec::number("HR", 0, 50),
                ColumnSpec::number("RBI", 0, 130),
                ColumnSpec::number("BB", 0, 100),
                ColumnSpec::number("SB", 0, 60),
                ColumnSpec::number("PO", 0, 400),
                ColumnSpec::number("PB", 0, 15),
                ColumnSpec::number("AB", 0, 650),
                ColumnSpec::number("G", 0, 162),
            ],
        }
    }
}

impl GeneratorConfig {
    /// `desk`: even operation mix. `wikiops-skew`: the operation mix of a
    /// large crawled corpus, dominated by `all`.
    pub fn preset(name: &str) -> Result<Self> {
        let mut c = Self::default();
        match name {
            "desk" => {}
            "wikiops-skew" => {
                c.op_mix = [
                    (Operation::All, 58.0),
                    (Operation::Min, 5.0),
                    (Operation::Max, 5.0),
                    (Operation::Count, 7.0),
                    (Operation::Sum, 3.0),
                    (Operation::Mean, 3.0),
                    (Operation::Range, 0.0),
                ]
                .into_iter()
                .collect();
            }
            _ => return Err(Error::Generator(format!("unknown generator preset `{name}`"))),
        }
        Ok(c)
    }

    pub fn total(&self) -> usize {
        self.train + self.dev + self.test
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Generator(m));
        if self.questions_per_table == 0 {
            return bad("questions_per_table must be positive".into());
        }
        if self.min_rows == 0 || self.min_rows > self.max_rows {
            return bad(format!("row range {}..={} is empty", self.min_rows, self.max_rows));
        }
        if self.min_cols < 2 || self.min_cols > self.max_cols {
            return bad(format!("column range {}..={} is invalid (need at least 2)", self.min_cols, self.max_cols));
        }
        if self.columns.len() < self.min_cols {
            return bad(format!("{} columns listed but tables need at least {}", self.columns.len(), self.min_cols));
        }
        if !(0.0..=1.0).contains(&self.numeric_condition_rate) {
            return bad("numeric_condition_rate must lie in [0, 1]".into());
        }
        for (i, c) in self.columns.iter().enumerate() {
            if self.columns[..i].iter().any(|d| d.name.eq_ignore_ascii_case(&c.name)) {
                return bad(format!("column `{}` listed twice", c.name));
            }
            if c.name.is_empty() || c.name.contains(['(', ')', '|', ',', '=', '<', '>']) {
                return bad(format!("column name `{}` clashes with logical-form syntax", c.name));
            }
            match c.kind {
                ColumnKind::Key if c.values.len() < self.max_rows => {
                    return bad(format!("key column `{}` needs at least {} values", c.name, self.max_rows))
                }
                ColumnKind::Category if c.values.is_empty() => {
                    return bad(format!("category column `{}` has no values", c.name))
                }
                ColumnKind::Number if c.min > c.max => return bad(format!("column `{}` has min > max", c.name)),
                _ => {}
            }
        }
        let weights: f64 = self.op_mix.values().sum();
        if self.op_mix.values().any(|w| !(*w >= 0.0)) || !(weights > 0.0) {
            return bad("op_mix weights must be non-negative with a positive total".into());
        }
        let has_number = self.columns.iter().any(|c| c.kind == ColumnKind::Number);
        for (op, w) in &self.op_mix {
            if *w > 0.0 && op.needs_numeric_cells() && !has_number {
                return bad(format!("operation {op} is in the mix but no column has kind `number`"));
            }
        }
        if self.max_conditions > 0 && !self.columns.iter().any(|c| c.kind == ColumnKind::Category) && self.numeric_condition_rate < 1.0 {
            return bad("conditions need at least one `category` column".into());
        }
        Ok(())
    }

    /// Exact per-operation counts for `total` examples (largest remainder,
    /// ties broken by operation order).
    pub fn quotas(&self, total: usize) -> Vec<(Operation, usize)> {
        let sum: f64 = self.op_mix.values().sum();
        let mut rows: Vec<(Operation, usize, f64)> = self
            .op_mix
            .iter()
            .map(|(&op, &w)| {
                let exact = w / sum * total as f64;
                (op, exact.floor() as usize, exact - exact.floor())
            })
            .collect();
        let assigned: usize = rows.iter().map(|r| r.1).sum();
        let mut order: Vec<usize> = (0..rows.len()).collect();
        order.sort_by(|&a, &b| rows[b].2.partial_cmp(&rows[a].2).unwrap().then(a.cmp(&b)));
        for &i in order.iter().take(total - assigned) {
            rows[i].1 += 1;
        }
        rows.into_iter().map(|(o, n, _)| (o, n)).collect()
    }
}

/// FNV-1a, so per-item seeds never depend on the platform hasher.
pub fn stable_hash(s: &str) -> u64 {
    s.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3))
}

pub fn item_rng(seed: u64, id: &str) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ stable_hash(id))
}

/// Tables and the three example splits.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Corpus {
    pub tables: Tables,
    pub train: Vec<Example>,
    pub dev: Vec<Example>,
    pub test: Vec<Example>,
}

pub fn generate_table(cfg: &GeneratorConfig, rng: &mut impl Rng) -> Table {
    let n = rng.gen_range(cfg.min_rows..=cfg.max_rows);
    let m = rng.gen_range(cfg.min_cols..=cfg.max_cols.min(cfg.columns.len()));
    let mut chosen: Vec<usize> = Vec::new();
    let mut rest: Vec<usize> = Vec::new();
    for (i, c) in cfg.columns.iter().enumerate() {
        if c.kind == ColumnKind::Key && chosen.is_empty() {
            chosen.push(i);
        } else {
            rest.push(i);
        }
    }
    rest.shuffle(rng);
    for kind in [ColumnKind::Category, ColumnKind::Number] {
        if let Some(p) = rest.iter().position(|&i| cfg.columns[i].kind == kind) {
            chosen.push(rest.remove(p));
        }
    }
    chosen.extend(rest.into_iter().take(m.saturating_sub(chosen.len())));
    chosen.truncate(m.max(1));
    chosen.sort_unstable();

    let mut columns: Vec<Vec<String>> = Vec::new();
    for &i in &chosen {
        let c = &cfg.columns[i];
        columns.push(match c.kind {
            ColumnKind::Key => c.values.choose_multiple(rng, n).cloned().collect(),
            ColumnKind::Category => (0..n).map(|_| c.values.choose(rng).unwrap().clone()).collect(),
            ColumnKind::Number => (0..n).map(|_| rng.gen_range(c.min..=c.max).to_string()).collect(),
        });
    }
    let rows = (0..n).map(|j| columns.iter().map(|col| col[j].clone()).collect()).collect();
    let headers = chosen.iter().map(|&i| cfg.columns[i].name.clone()).collect();
    Table::new(headers, rows).expect("generated table is rectangular")
}

fn kind_of(cfg: &GeneratorConfig, header: &str) -> Option<ColumnKind> {
    cfg.columns.iter().find(|c| &c.name == header).map(|c| c.kind)
}

/// A logical form for `op` over `table` whose operand set is non-empty:
/// every condition is drawn so that one anchor row satisfies it.
pub fn sample_logical_form(cfg: &GeneratorConfig, op: Operation, table: &Table, rng: &mut impl Rng) -> Result<LogicalForm> {
    let headers = table.headers();
    let kinds: Vec<Option<ColumnKind>> = headers.iter().map(|h| kind_of(cfg, h)).collect();
    let targets: Vec<usize> = (0..headers.len())
        .filter(|&k| !op.needs_numeric_cells() || table.column_is_numeric(k))
        .collect();
    let &target = targets
        .choose(rng)
        .ok_or_else(|| Error::Generator(format!("table has no column usable as a {op} target")))?;
    let anchor = rng.gen_range(0..table.n_rows());
    let k = rng.gen_range(0..=cfg.max_conditions);
    let mut used = vec![target];
    let mut conditions = Vec::new();
    for _ in 0..k {
        let numeric = rng.gen_bool(cfg.numeric_condition_rate);
        let pool: Vec<usize> = (0..headers.len())
            .filter(|c| !used.contains(c))
            .filter(|&c| {
                if numeric {
                    kinds[c] == Some(ColumnKind::Number)
                } else {
                    kinds[c] == Some(ColumnKind::Category)
                }
            })
            .collect();
        let Some(&col) = pool.choose(rng) else { break };
        used.push(col);
        let cell = table.cell(anchor, col);
        let (cmp, value) = match cell.numeric {
            Some(v) if numeric => {
                let cmp = *Comparator::ALL.choose(rng).unwrap();
                let v = match cmp {
                    Comparator::Gt => v - 1.0,
                    Comparator::Lt => v + 1.0,
                    _ => v,
                };
                (cmp, Value::Num(v))
            }
            _ => (Comparator::Eq, Value::parse(cell.raw.trim())),
        };
        conditions.push(Condition {
            column: headers[col].clone(),
            cmp,
            value,
        });
    }
    Ok(LogicalForm {
        op,
        target: headers[target].clone(),
        conditions,
    })
}

pub fn make_example(id: String, table_id: &str, table: &Table, lf: LogicalForm, variant: usize) -> Result<Example> {
    let (operands, answer) = oracle_execute(&lf, table)?;
    Ok(Example {
        id,
        question: render_question(&lf, variant),
        table_id: table_id.to_string(),
        logical_form: lf,
        operands,
        answer,
    })
}

pub fn generate(cfg: &GeneratorConfig) -> Result<Corpus> {
    cfg.validate()?;
    let total = cfg.total();
    let mut ops: Vec<Operation> = cfg
        .quotas(total)
        .into_iter()
        .flat_map(|(o, n)| std::iter::repeat(o).take(n))
        .collect();
    ops.shuffle(&mut ChaCha8Rng::seed_from_u64(cfg.seed));

    let mut tables = Tables::new();
    let mut examples = Vec::with_capacity(total);
    for (i, op) in ops.into_iter().enumerate() {
        let table_id = format!("t{:04}", i / cfg.questions_per_table);
        if !tables.contains_key(&table_id) {
            let t = generate_table(cfg, &mut item_rng(cfg.seed, &table_id));
            tables.insert(table_id.clone(), t);
        }
        let table = &tables[&table_id];
        let id = format!("q{i:05}");
        let mut rng = item_rng(cfg.seed, &id);
        let lf = sample_logical_form(cfg, op, table, &mut rng)?;
        let variant = rng.gen_range(0..variants(op).len());
        examples.push(make_example(id, &table_id, table, lf, variant)?);
    }
    let test = examples.split_off(cfg.train + cfg.dev);
    let dev = examples.split_off(cfg.train);
    Ok(Corpus {
        tables,
        train: examples,
        dev,
        test,
    })
}
