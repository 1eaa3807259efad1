//! Operand and answer metrics, the evaluation loop, the adversarial
//! harness, and attention traces.

mod metrics;
mod trace;

pub use metrics::{
    answers_match, final_accuracy, hard_operand_accuracy, report, soft_operand_pr, MetricsReport, ANSWER_TOLERANCE,
};
pub use trace::{dump_trace, parse_trace_text, render_trace_text, Trace, TraceEntry, TraceStep};

use serde::{Deserialize, Serialize};

use crate::dataspace::{oracle_execute, perturb_dataset, validate, Dataset, Example, PerturbMode, PerturbStatus};
use crate::encoders::Table;
use crate::error::{Error, Result};
use crate::model::OperandModel;
use crate::parallel::ordered_map;
use crate::opsolver::{Answer, Operation};
use crate::rowsel::OperandSet;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictedOutput {
    pub id: String,
    pub operation: Option<Operation>,
    pub operands: OperandSet,
    pub answer: Option<Answer>,
}

/// Anything that maps an example to an operand set and an answer.
pub trait Predictor: Sync {
    fn predict(&self, ex: &Example, table: &Table, gamma: f64) -> Result<PredictedOutput>;
}

impl Predictor for OperandModel {
    fn predict(&self, ex: &Example, table: &Table, gamma: f64) -> Result<PredictedOutput> {
        let p = OperandModel::predict(self, &ex.question, table, gamma)?;
        Ok(PredictedOutput {
            id: ex.id.clone(),
            operation: Some(p.operation),
            operands: p.operands,
            answer: p.answer,
        })
    }
}

/// Answers every example by running its gold logical form: the upper bound
/// every metric path must reach.
#[derive(Clone, Copy, Debug, Default)]
pub struct OracleAdapter;

impl Predictor for OracleAdapter {
    fn predict(&self, ex: &Example, table: &Table, _gamma: f64) -> Result<PredictedOutput> {
        let (operands, answer) = oracle_execute(&ex.logical_form, table)?;
        Ok(PredictedOutput {
            id: ex.id.clone(),
            operation: Some(ex.logical_form.op),
            operands,
            answer: Some(answer),
        })
    }
}

/// Predictions in example order, computed on up to `threads` workers.
pub fn predict_all(p: &dyn Predictor, data: &Dataset, gamma: f64, threads: usize) -> Result<Vec<PredictedOutput>> {
    let items: Vec<&Example> = data.examples.iter().collect();
    ordered_map(threads, items, |ex| p.predict(ex, data.table(ex)?, gamma))
        .into_iter()
        .collect()
}

pub fn score(data: &Dataset, preds: &[PredictedOutput]) -> Result<MetricsReport> {
    let pred_sets: Vec<OperandSet> = preds.iter().map(|p| p.operands.clone()).collect();
    let pred_answers: Vec<Option<Answer>> = preds.iter().map(|p| p.answer.clone()).collect();
    let gold_sets: Vec<OperandSet> = data.examples.iter().map(|e| e.operands.clone()).collect();
    let gold_answers: Vec<Answer> = data.examples.iter().map(|e| e.answer.clone()).collect();
    report(&pred_sets, &gold_sets, &pred_answers, &gold_answers)
}

pub fn evaluate(p: &dyn Predictor, data: &Dataset, gamma: f64) -> Result<MetricsReport> {
    evaluate_with(p, data, gamma, 1)
}

pub fn evaluate_with(p: &dyn Predictor, data: &Dataset, gamma: f64, threads: usize) -> Result<MetricsReport> {
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(Error::Config(format!("threshold {gamma} must lie strictly between 0 and 1")));
    }
    score(data, &predict_all(p, data, gamma, threads)?)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdversarialReport {
    pub mode: PerturbMode,
    /// Metrics on the examples that could be perturbed, before perturbation.
    pub base: MetricsReport,
    pub perturbed: MetricsReport,
    pub final_acc_drop: f64,
    pub relative_drop: f64,
    pub emitted: usize,
    pub skipped: usize,
    pub all_valid: bool,
    pub status: Vec<PerturbStatus>,
}

/// Compare accuracy on perturbable examples before and after perturbation.
pub fn adversarial_eval(p: &dyn Predictor, data: &Dataset, mode: PerturbMode, seed: u64, gamma: f64) -> Result<AdversarialReport> {
    let (perturbed, status) = perturb_dataset(data, mode, seed)?;
    let all_valid = validate(&perturbed.examples, &perturbed.tables).is_ok();
    let kept: std::collections::BTreeSet<&str> = perturbed.examples.iter().map(|e| e.id.as_str()).collect();
    let mut base = Dataset {
        tables: data.tables.clone(),
        examples: data.examples.iter().filter(|e| kept.contains(e.id.as_str())).cloned().collect(),
    };
    base.prune_tables();
    let b = evaluate(p, &base, gamma)?;
    let a = evaluate(p, &perturbed, gamma)?;
    let drop = b.final_acc - a.final_acc;
    Ok(AdversarialReport {
        mode,
        relative_drop: if b.final_acc > 0.0 { drop / b.final_acc } else { 0.0 },
        final_acc_drop: drop,
        base: b,
        perturbed: a,
        emitted: perturbed.examples.len(),
        skipped: status.iter().filter(|s| s.status == "skipped").count(),
        all_valid,
        status,
    })
}
