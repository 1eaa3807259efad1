//! Shared by the test binaries. The naive scan and plain aggregates are
//! deliberate re-implementations that use nothing from the crate beyond its
//! data types; the metrics fixture is scored by hand in `metrics.rs`.
#![allow(dead_code)]

use operand_qa::autodiff::{Graph, ParameterStore};
use operand_qa::dataspace::fixtures::{putouts, running_sum};
use operand_qa::dataspace::{make_example, oracle_execute, Comparator, Condition, Dataset, LogicalForm, Tables, Value};
use operand_qa::encoders::Table;
use operand_qa::evaluator::PredictedOutput;
use operand_qa::opsolver::{hard_op, soft_answer, Answer, NumericGrid, Operation};
use operand_qa::rowsel::OperandSet;
use operand_qa::Error;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn naive_number(s: &str) -> Option<f64> {
    let b = s.strip_prefix('-').or_else(|| s.strip_prefix('+')).unwrap_or(s);
    let mut dots = 0;
    let mut digits = 0;
    for ch in b.chars() {
        if ch == '.' {
            dots += 1;
        } else if ch.is_ascii_digit() {
            digits += 1;
        } else {
            return None;
        }
    }
    if dots > 1 || digits == 0 || b.starts_with('.') || b.ends_with('.') {
        return None;
    }
    s.parse().ok()
}

pub fn naive_norm(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase()
}

#[derive(Debug, PartialEq)]
pub enum Naive {
    Num(f64),
    Cells(Vec<String>),
    Empty,
    NotNumeric,
}

pub fn naive_scan(lf: &LogicalForm, headers: &[String], rows: &[Vec<String>]) -> (Vec<(usize, usize)>, Naive) {
    let col = |name: &str| headers.iter().position(|h| h == name).unwrap();
    let t = col(&lf.target);
    let mut cells = Vec::new();
    for (j, row) in rows.iter().enumerate() {
        let mut ok = true;
        for c in &lf.conditions {
            let raw = &row[col(&c.column)];
            let pass = match (&c.value, naive_number(raw)) {
                (Value::Num(v), Some(x)) => match c.cmp {
                    Comparator::Eq => x == *v,
                    Comparator::Gt => x > *v,
                    Comparator::Lt => x < *v,
                    Comparator::Ge => x >= *v,
                    Comparator::Le => x <= *v,
                },
                (Value::Text(s), _) => c.cmp == Comparator::Eq && naive_norm(s) == naive_norm(raw),
                _ => false,
            };
            ok &= pass;
        }
        if ok {
            cells.push((j, t));
        }
    }
    let vals: Vec<&String> = cells.iter().map(|&(j, k)| &rows[j][k]).collect();
    let answer = match lf.op {
        Operation::All => Naive::Cells(vals.iter().map(|s| s.to_string()).collect()),
        _ if cells.is_empty() => Naive::Empty,
        Operation::Count => Naive::Num(cells.len() as f64),
        op => {
            let nums: Option<Vec<f64>> = vals.iter().map(|s| naive_number(s)).collect();
            match nums {
                None => Naive::NotNumeric,
                Some(xs) => {
                    let mut hi = f64::NEG_INFINITY;
                    let mut lo = f64::INFINITY;
                    let mut total = 0.0;
                    for &x in &xs {
                        hi = hi.max(x);
                        lo = lo.min(x);
                        total += x;
                    }
                    Naive::Num(match op {
                        Operation::Sum => total,
                        Operation::Max => hi,
                        Operation::Min => lo,
                        Operation::Mean => total / xs.len() as f64,
                        Operation::Range => hi - lo,
                        _ => unreachable!(),
                    })
                }
            }
        }
    };
    (cells, answer)
}

pub fn random_case(rng: &mut ChaCha8Rng) -> (Vec<String>, Vec<Vec<String>>, LogicalForm) {
    let n = rng.gen_range(1..9);
    let m = rng.gen_range(2..6);
    let headers: Vec<String> = (0..m).map(|k| format!("c{k}")).collect();
    let words = ["RF", "LF", "NYY", "bos", "7-3", "x y"];
    let numeric: Vec<bool> = (0..m).map(|_| rng.gen_bool(0.6)).collect();
    let rows: Vec<Vec<String>> = (0..n)
        .map(|_| {
            (0..m)
                .map(|k| {
                    if numeric[k] {
                        match rng.gen_range(0..4) {
                            0 => format!("{}.5", rng.gen_range(0..5)),
                            1 => format!("-{}", rng.gen_range(1..5)),
                            _ => rng.gen_range(0..6).to_string(),
                        }
                    } else {
                        words[rng.gen_range(0..words.len())].to_string()
                    }
                })
                .collect()
        })
        .collect();
    let op = Operation::ALL[rng.gen_range(0..7)];
    let conditions = (0..rng.gen_range(0..3))
        .map(|_| {
            let k = rng.gen_range(0..m);
            let anchor = &rows[rng.gen_range(0..n)][k];
            let cmp = Comparator::ALL[rng.gen_range(0..5)];
            Condition {
                column: headers[k].clone(),
                cmp,
                value: Value::parse(anchor),
            }
        })
        .collect();
    let lf = LogicalForm {
        op,
        target: headers[rng.gen_range(0..m)].clone(),
        conditions,
    };
    (headers, rows, lf)
}

pub fn column(values: &[&str]) -> Table {
    Table::new(vec!["v"], values.iter().map(|v| vec![v.to_string()]).collect()).unwrap()
}

/// Soft value of `op` in answer space for a fixed score matrix.
pub fn soft(op: Operation, scores: &[f64], table: &Table) -> f64 {
    let store = ParameterStore::new();
    let mut g = Graph::new(&store);
    let grid = NumericGrid::from_table(table, 1.0).unwrap();
    let c = g.tape.leaf(table.n_rows(), table.n_cols(), scores.to_vec()).unwrap();
    let v = soft_answer(&mut g, op, c, &grid).unwrap();
    g.tape.scalar(v)
}

pub fn naive(op: Operation, xs: &[f64]) -> f64 {
    let mut sorted = xs.to_vec();
    sorted.sort_by(f64::total_cmp);
    let lo = sorted[0];
    let hi = sorted[sorted.len() - 1];
    let total: f64 = sorted.iter().sum();
    match op {
        Operation::Count => xs.len() as f64,
        Operation::Sum => total,
        Operation::Max => hi,
        Operation::Min => lo,
        Operation::Range => hi - lo,
        Operation::Mean => total / xs.len() as f64,
        Operation::All => unreachable!(),
    }
}

pub fn metrics_fixture() -> (Dataset, Vec<PredictedOutput>) {
    let (pt, max_ex) = putouts();
    let (rt, sum_ex) = running_sum();
    let count_ex = make_example("count".into(), "running-sum", &rt, "count(Player|Team=BOS)".parse().unwrap(), 0).unwrap();
    let all_ex = make_example("all".into(), "running-sum", &rt, "all(Player|Team=NYY)".parse().unwrap(), 0).unwrap();
    let tables: Tables = [("putouts".to_string(), pt), ("running-sum".to_string(), rt)].into_iter().collect();
    let data = Dataset {
        tables,
        examples: vec![max_ex, sum_ex, count_ex, all_ex],
    };
    let pred = |id: &str, op, cells: &[(usize, usize)], answer| PredictedOutput {
        id: id.into(),
        operation: Some(op),
        operands: OperandSet(cells.to_vec()),
        answer,
    };
    let preds = vec![
        // exact set, exact answer
        pred("putouts", Operation::Max, &[(0, 3), (1, 3)], Some(Answer::Num(286.0))),
        // superset, wrong answer
        pred("running-sum", Operation::Sum, &[(0, 2), (1, 2), (2, 2), (4, 2)], Some(Answer::Num(23.0))),
        // one right, one wrong cell; answer right within tolerance
        pred("count", Operation::Count, &[(0, 0), (1, 0)], Some(Answer::Num(2.000_000_1))),
        // exact set listed in another order, cells in another order
        pred(
            "all",
            Operation::All,
            &[(4, 0), (0, 0), (2, 0)],
            Some(Answer::Cells(vec!["Soto".into(), "Judge".into(), "Torres".into()])),
        ),
    ];
    (data, preds)
}

/// One random oracle-vs-scan comparison. `Ok(true)` when both produced an
/// answer, `Ok(false)` when both refused it for the same reason.
pub fn oracle_case(rng: &mut ChaCha8Rng) -> Result<bool, String> {
    let (headers, rows, lf) = random_case(rng);
    let table = Table::new(headers.clone(), rows.clone()).map_err(|e| e.to_string())?;
    let (want_cells, want) = naive_scan(&lf, &headers, &rows);
    match (oracle_execute(&lf, &table), want) {
        (Ok((set, got)), want) => {
            if set.0 != want_cells {
                return Err(format!("{lf}: cells {:?} vs {want_cells:?}", set.0));
            }
            match (got, want) {
                (Answer::Num(a), Naive::Num(b)) if a == b => Ok(true),
                (Answer::Cells(a), Naive::Cells(b)) if a == b => Ok(true),
                (got, want) => Err(format!("{lf}: {got:?} vs {want:?}")),
            }
        }
        (Err(Error::EmptySelection(_)), Naive::Empty) => Ok(false),
        (Err(Error::Semantics { .. }), Naive::NotNumeric) => Ok(false),
        (got, want) => Err(format!("{lf}: {got:?} vs {want:?}")),
    }
}

/// One random grid with a 0/1 score matrix; soft results must equal the hard
/// operator exactly (mean within 1e-9) and agree with plain arithmetic.
/// Returns the largest mean discrepancy.
pub fn soft_hard_case(rng: &mut ChaCha8Rng) -> Result<f64, String> {
    let n = rng.gen_range(1..7);
    let m = rng.gen_range(1..4);
    let rows: Vec<Vec<String>> = (0..n)
        .map(|_| {
            (0..m)
                .map(|_| {
                    if rng.gen_bool(0.3) {
                        // dyadic fractions, so the reversed grid decodes without rounding
                        format!("{}.{}", rng.gen_range(1..50), ["5", "25", "125", "75"][rng.gen_range(0..4)])
                    } else {
                        rng.gen_range(1..1000).to_string()
                    }
                })
                .collect()
        })
        .collect();
    let table = Table::new((0..m).map(|k| format!("c{k}")).collect(), rows).map_err(|e| e.to_string())?;
    let mut cells = Vec::new();
    let mut scores = vec![0.0; n * m];
    for i in 0..n * m {
        if rng.gen_bool(0.5) {
            scores[i] = 1.0;
            cells.push((i / m, i % m));
        }
    }
    if cells.is_empty() {
        let i = rng.gen_range(0..n * m);
        scores[i] = 1.0;
        cells.push((i / m, i % m));
    }
    let xs: Vec<f64> = cells.iter().map(|&(r, c)| table.cell(r, c).raw.parse().unwrap()).collect();
    let set = OperandSet(cells);
    let mut mean_gap: f64 = 0.0;
    for op in [Operation::Count, Operation::Sum, Operation::Max, Operation::Min, Operation::Range, Operation::Mean] {
        let got = soft(op, &scores, &table);
        let Ok(Answer::Num(hard)) = hard_op(op, &set, &table) else {
            return Err(format!("{op}: hard operator gave no number"));
        };
        let want = naive(op, &xs);
        if op == Operation::Mean {
            mean_gap = mean_gap.max((got - hard).abs());
            if (got - hard).abs() > 1e-9 || (hard - want).abs() > 1e-9 {
                return Err(format!("{op}: soft {got} hard {hard} plain {want}"));
            }
        } else if got != hard || (hard - want).abs() > 1e-9 * want.abs().max(1.0) {
            return Err(format!("{op}: soft {got} hard {hard} plain {want}"));
        }
    }
    Ok(mean_gap)
}
