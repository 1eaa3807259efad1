use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::opsolver::Answer;
use crate::rowsel::OperandSet;

/// Relative tolerance for numeric answers.
pub const ANSWER_TOLERANCE: f64 = 1e-6;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub soft_op_p: f64,
    pub soft_op_r: f64,
    pub hard_op_a: f64,
    pub final_acc: f64,
    pub selected: usize,
    pub correct_selected: usize,
    pub total_operands: usize,
    pub correct_sets: usize,
    pub total_sets: usize,
    pub correct_answers: usize,
    pub total_answers: usize,
    /// Set when nothing at all was selected, so precision is reported as 0.
    pub empty_selection: bool,
}

const CSV_HEADER: &str = "soft_op_p,soft_op_r,hard_op_a,final_acc,selected,correct_selected,total_operands,correct_sets,total_sets,correct_answers,total_answers,empty_selection";

impl MetricsReport {
    pub fn csv_header() -> &'static str {
        CSV_HEADER
    }

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            self.soft_op_p,
            self.soft_op_r,
            self.hard_op_a,
            self.final_acc,
            self.selected,
            self.correct_selected,
            self.total_operands,
            self.correct_sets,
            self.total_sets,
            self.correct_answers,
            self.total_answers,
            self.empty_selection
        )
    }

    pub fn to_csv(&self) -> String {
        format!("{CSV_HEADER}\n{}\n", self.csv_row())
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        if lines.next() != Some(CSV_HEADER) {
            return Err(Error::Format("unexpected metrics CSV header".into()));
        }
        let row = lines.next().ok_or_else(|| Error::Format("metrics CSV has no data row".into()))?;
        let f: Vec<&str> = row.split(',').collect();
        if f.len() != 12 {
            return Err(Error::Format(format!("metrics row has {} fields", f.len())));
        }
        let num = |i: usize| f[i].parse::<f64>().map_err(|e| Error::Format(e.to_string()));
        let int = |i: usize| f[i].parse::<usize>().map_err(|e| Error::Format(e.to_string()));
        Ok(Self {
            soft_op_p: num(0)?,
            soft_op_r: num(1)?,
            hard_op_a: num(2)?,
            final_acc: num(3)?,
            selected: int(4)?,
            correct_selected: int(5)?,
            total_operands: int(6)?,
            correct_sets: int(7)?,
            total_sets: int(8)?,
            correct_answers: int(9)?,
            total_answers: int(10)?,
            empty_selection: f[11] == "true",
        })
    }
}

fn aligned<A, B>(a: &[A], b: &[B]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::Contract(format!("{} predictions for {} gold entries", a.len(), b.len())));
    }
    Ok(())
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Micro-averaged cell precision and recall; the flag reports an empty
/// precision denominator.
pub fn soft_operand_pr(pred: &[OperandSet], gold: &[OperandSet]) -> Result<(f64, f64, bool)> {
    let r = report(pred, gold, &[], &[])?;
    Ok((r.soft_op_p, r.soft_op_r, r.empty_selection))
}

pub fn hard_operand_accuracy(pred: &[OperandSet], gold: &[OperandSet]) -> Result<f64> {
    Ok(report(pred, gold, &[], &[])?.hard_op_a)
}

fn set_eq(a: &OperandSet, b: &OperandSet) -> bool {
    let mut x = a.0.clone();
    let mut y = b.0.clone();
    x.sort_unstable();
    y.sort_unstable();
    x == y
}

/// Numbers within relative tolerance; cell lists as multisets; a missing
/// prediction never matches.
pub fn answers_match(pred: Option<&Answer>, gold: &Answer) -> bool {
    match (pred, gold) {
        (Some(Answer::Num(p)), Answer::Num(g)) => (p - g).abs() <= ANSWER_TOLERANCE * g.abs().max(1.0),
        (Some(Answer::Cells(p)), Answer::Cells(g)) => {
            fn count(v: &[String]) -> BTreeMap<&str, usize> {
                let mut m = BTreeMap::new();
                for s in v {
                    *m.entry(s.as_str()).or_default() += 1;
                }
                m
            }
            count(p) == count(g)
        }
        _ => false,
    }
}

pub fn final_accuracy(pred: &[Option<Answer>], gold: &[Answer]) -> Result<f64> {
    aligned(pred, gold)?;
    let ok = pred.iter().zip(gold).filter(|(p, g)| answers_match(p.as_ref(), g)).count();
    Ok(ratio(ok, gold.len()))
}

/// All four metrics with their counts. Answer slices may be empty to skip
/// the answer metric.
pub fn report(
    pred_sets: &[OperandSet],
    gold_sets: &[OperandSet],
    pred_answers: &[Option<Answer>],
    gold_answers: &[Answer],
) -> Result<MetricsReport> {
    aligned(pred_sets, gold_sets)?;
    aligned(pred_answers, gold_answers)?;
    let mut r = MetricsReport {
        total_sets: gold_sets.len(),
        total_answers: gold_answers.len(),
        ..Default::default()
    };
    for (p, g) in pred_sets.iter().zip(gold_sets) {
        r.selected += p.len();
        r.total_operands += g.len();
        r.correct_selected += p.iter().filter(|c| g.contains(**c)).count();
        r.correct_sets += set_eq(p, g) as usize;
    }
    r.correct_answers = pred_answers
        .iter()
        .zip(gold_answers)
        .filter(|(p, g)| answers_match(p.as_ref(), g))
        .count();
    r.empty_selection = r.selected == 0;
    r.soft_op_p = ratio(r.correct_selected, r.selected);
    r.soft_op_r = ratio(r.correct_selected, r.total_operands);
    r.hard_op_a = ratio(r.correct_sets, r.total_sets);
    r.final_acc = ratio(r.correct_answers, r.total_answers);
    Ok(r)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(cells: &[(usize, usize)]) -> OperandSet {
        OperandSet(cells.to_vec())
    }

    #[test]
    fn precision_recall_cases() {
        let g = [s(&[(0, 1), (0, 2)])];
        assert_eq!(soft_operand_pr(&g, &g).unwrap(), (1.0, 1.0, false));
        let p = [s(&[(0, 0), (0, 1)])];
        assert_eq!(soft_operand_pr(&p, &g).unwrap(), (0.5, 0.5, false));
        assert_eq!(soft_operand_pr(&[s(&[])], &g).unwrap(), (0.0, 0.0, true));
        assert!(soft_operand_pr(&[], &g).is_err());
    }

    #[test]
    fn tolerance_and_multisets() {
        assert!(answers_match(Some(&Answer::Num(14.0000001)), &Answer::Num(14.0)));
        assert!(!answers_match(Some(&Answer::Num(14.001)), &Answer::Num(14.0)));
        let a = Answer::Cells(vec!["RF".into(), "LF".into()]);
        let b = Answer::Cells(vec!["LF".into(), "RF".into()]);
        assert!(answers_match(Some(&a), &b));
        assert!(!answers_match(Some(&a), &Answer::Cells(vec!["LF".into(), "LF".into()])));
        assert!(!answers_match(None, &Answer::Num(0.0)));
        assert!(!answers_match(Some(&Answer::Num(0.0)), &a));
    }

    #[test]
    fn csv_round_trip() {
        let r = report(&[s(&[(0, 0)])], &[s(&[(0, 0), (1, 0)])], &[Some(Answer::Num(1.0 / 3.0))], &[Answer::Num(1.0 / 3.0)]).unwrap();
        assert_eq!(MetricsReport::from_csv(&r.to_csv()).unwrap(), r);
    }
}
