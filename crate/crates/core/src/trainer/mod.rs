//! Losses, the Adadelta optimizer with max-norm, checkpoints and the
//! training loop.

mod checkpoint;
mod loss;
mod optim;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CHECKPOINT_VERSION};
pub use loss::{answer_loss, answer_loss_value, cell_loss, op_loss, ANSWER_EPSILON, CELL_CLAMP};
pub use optim::{adadelta_step, maxnorm_constraint};

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Graph, ParamId, Var};
use crate::dataspace::{item_rng, stable_hash, validate, Dataset, Example};
use crate::error::{Error, Result};
use crate::evaluator::evaluate_with;
use crate::parallel::ordered_map;
use crate::model::{Forward, OperandModel};
use crate::encoders::Table;
use crate::evaluator::answers_match;
use crate::opsolver::{hard_op, Answer, Operation};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub epochs: usize,
    pub dropout: f64,
    pub max_norm: f64,
    pub gamma: f64,
    pub use_cell_loss: bool,
    pub use_answer_loss: bool,
    /// Add `−log Σ a_o` over the operations that map the gold operands to
    /// the gold answer.
    pub use_op_loss: bool,
    pub seed: u64,
    pub rho: f64,
    pub epsilon: f64,
    pub learning_rate: f64,
    /// Evaluate on the training set after every epoch.
    pub track_train_metrics: bool,
    /// Worker threads for the per-example passes. Results do not depend on it.
    #[serde(skip, default = "one")]
    pub threads: usize,
}

fn one() -> usize {
    1
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 50,
            epochs: 10,
            dropout: 0.2,
            max_norm: 3.0,
            gamma: 0.5,
            use_cell_loss: true,
            use_answer_loss: true,
            use_op_loss: true,
            seed: 1,
            rho: 0.95,
            epsilon: 1e-6,
            learning_rate: 1.0,
            track_train_metrics: true,
            threads: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::Config(m.to_string()));
        if !self.use_cell_loss && !self.use_answer_loss && !self.use_op_loss {
            return fail("at least one loss term must be enabled");
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return fail("dropout must lie in [0, 1)");
        }
        if !(self.max_norm > 0.0) {
            return fail("max_norm must be positive");
        }
        if self.threads == 0 {
            return fail("threads must be at least 1");
        }
        if self.batch_size == 0 {
            return fail("batch_size must be positive");
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return fail("gamma must lie strictly between 0 and 1");
        }
        if !(self.rho > 0.0 && self.rho < 1.0) || !(self.epsilon > 0.0) || !(self.learning_rate > 0.0) {
            return fail("optimizer settings out of range");
        }
        Ok(())
    }

    /// Target of the squared-error answer loss; `all` questions have none.
    pub fn answer_target(&self, ex: &Example) -> Option<f64> {
        match ex.answer {
            Answer::Num(y) if self.use_answer_loss => Some(y),
            _ => None,
        }
    }

    /// Indices into `ops` of the operations consistent with the example's
    /// gold operands and answer, when the operation loss is on.
    pub fn op_targets(&self, ex: &Example, table: &Table, ops: &[Operation]) -> Option<Vec<usize>> {
        if !self.use_op_loss {
            return None;
        }
        let hits: Vec<usize> = ops
            .iter()
            .enumerate()
            .filter(|(_, &op)| hard_op(op, &ex.operands, table).is_ok_and(|a| answers_match(Some(&a), &ex.answer)))
            .map(|(i, _)| i)
            .collect();
        (!hits.is_empty()).then_some(hits)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub loss: f64,
    pub cell_loss: f64,
    pub answer_loss: f64,
    pub op_loss: f64,
    pub train_hard_op_a: f64,
    pub train_final_acc: f64,
}

impl EpochMetrics {
    pub const CSV_HEADER: &'static str = "epoch,loss,cell_loss,answer_loss,op_loss,train_hard_op_a,train_final_acc";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{}",
            self.epoch, self.loss, self.cell_loss, self.answer_loss, self.op_loss, self.train_hard_op_a, self.train_final_acc
        )
    }
}

pub fn metrics_csv(log: &[EpochMetrics]) -> String {
    let mut s = format!("{}\n", EpochMetrics::CSV_HEADER);
    for m in log {
        let _ = writeln!(s, "{}", m.csv_row());
    }
    s
}

/// Losses of one batch after the parameter update.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct BatchLoss {
    pub loss: f64,
    pub cell_loss: f64,
    pub answer_loss: Option<f64>,
    pub op_loss: f64,
}

/// The loss of one example on its own tape:
/// `L_cell + log((y′ − y)² + ε) − log Σ_{o∈S} a_o` with the configured terms.
pub fn example_loss(g: &mut Graph, model: &OperandModel, ex: &Example, cfg: &TrainConfig, table: &crate::encoders::Table) -> Result<(Forward, Var)> {
    let tokens = model.tokens(&ex.question)?;
    let fwd = model.forward(g, &tokens, table)?;
    let mut parts = Vec::new();
    if cfg.use_cell_loss {
        let ind = ex.indicator(table.n_rows(), table.n_cols());
        parts.push(cell_loss(g, fwd.cells, &ind)?);
    }
    if let Some(y) = cfg.answer_target(ex) {
        parts.push(answer_loss(g, &[fwd.mixture], &[y])?);
    }
    if let Some(s) = cfg.op_targets(ex, table, model.operations()) {
        parts.push(op_loss(g, fwd.op_weights, &s)?);
    }
    let mut total = g.tape.constant_scalar(0.0);
    for p in parts {
        total = g.tape.add(total, p)?;
    }
    Ok((fwd, total))
}

/// Forward every example, then backpropagate each example's share of
/// `mean L_cell + log(Σ (y′−y)² + ε) + mean(−log Σ_{o∈S} a_o)` and apply one
/// optimizer step.
/// Gradients are merged in example order, so the result is independent of
/// how the per-example work is scheduled.
pub fn train_batch(model: &mut OperandModel, data: &Dataset, batch: &[&Example], cfg: &TrainConfig, epoch: usize) -> Result<BatchLoss> {
    let b = batch.len() as f64;
    let model_ref = &*model;
    let passes = ordered_map(cfg.threads, batch.to_vec(), |ex| forward_pass(model_ref, data, ex, cfg, Some(epoch)));
    let passes = passes.into_iter().collect::<Result<Vec<_>>>()?;
    let (loss, residual_sq) = summarize(&passes, cfg, b);
    let denom = residual_sq + ANSWER_EPSILON;
    let per_example = ordered_map(cfg.threads, passes, |p| -> Result<Vec<(ParamId, Vec<f64>)>> {
        let Pass { mut g, mixture, cell, op, residual } = p;
        let mut terms = Vec::new();
        for v in [cell, op].into_iter().flatten() {
            terms.push(g.tape.scale(v, 1.0 / b));
        }
        if let Some(r) = residual {
            terms.push(g.tape.scale(mixture, 2.0 * r / denom));
        }
        let Some((&first, rest)) = terms.split_first() else { return Ok(Vec::new()) };
        let mut root = first;
        for &t in rest {
            root = g.tape.add(root, t)?;
        }
        g.tape.backward(root)?;
        Ok(g.tape.param_grads().map(|(id, gr)| (id, gr.to_vec())).collect())
    });
    let mut grads: Vec<Vec<f64>> = model.store.iter().map(|p| vec![0.0; p.len()]).collect();
    for contrib in per_example {
        for (id, gr) in contrib? {
            for (d, s) in grads[id.index()].iter_mut().zip(gr) {
                *d += s;
            }
        }
    }
    for (p, g) in model.store.iter_mut().zip(&grads) {
        p.grad_mut().copy_from_slice(g);
    }
    adadelta_step(&mut model.store, cfg.rho, cfg.epsilon, cfg.learning_rate)?;
    maxnorm_constraint(&mut model.store, cfg.max_norm);
    Ok(loss)
}

/// Forward one example on its own tape, with dropout when `epoch` is given.
fn forward_pass<'a>(model: &'a OperandModel, data: &Dataset, ex: &Example, cfg: &TrainConfig, epoch: Option<usize>) -> Result<Pass<'a>> {
    let table = data.table(ex)?;
    let tokens = model.tokens(&ex.question)?;
    let mut g = Graph::new(&model.store);
    if let Some(epoch) = epoch {
        g = g.with_dropout(cfg.dropout, item_rng(cfg.seed, &format!("dropout/{epoch}/{}", ex.id)));
    }
    let fwd = model.forward(&mut g, &tokens, table)?;
    let cell = if cfg.use_cell_loss {
        let ind = ex.indicator(table.n_rows(), table.n_cols());
        Some(cell_loss(&mut g, fwd.cells, &ind)?)
    } else {
        None
    };
    let y = g.tape.scalar(fwd.mixture);
    if !y.is_finite() {
        return Err(Error::Numeric(format!("non-finite predicted answer for example {}", ex.id)));
    }
    let op = match cfg.op_targets(ex, table, model.operations()) {
        Some(s) => Some(op_loss(&mut g, fwd.op_weights, &s)?),
        None => None,
    };
    Ok(Pass {
        g,
        mixture: fwd.mixture,
        cell,
        op,
        residual: cfg.answer_target(ex).map(|t| y - t),
    })
}

/// Batch loss from finished forward passes, plus the summed squared residual.
fn summarize(passes: &[Pass], cfg: &TrainConfig, b: f64) -> (BatchLoss, f64) {
    let mut cell_total = 0.0;
    let mut op_total = 0.0;
    let mut residual_sq = 0.0;
    let mut any_answer = false;
    for p in passes {
        if let Some(v) = p.cell {
            cell_total += p.g.tape.scalar(v);
        }
        if let Some(v) = p.op {
            op_total += p.g.tape.scalar(v);
        }
        if let Some(r) = p.residual {
            residual_sq += r * r;
            any_answer = true;
        }
    }
    let cell = if cfg.use_cell_loss { cell_total / b } else { 0.0 };
    let answer = any_answer.then(|| (residual_sq + ANSWER_EPSILON).ln());
    let op = op_total / b;
    let loss = BatchLoss {
        loss: cell + answer.unwrap_or(0.0) + op,
        cell_loss: cell,
        answer_loss: answer,
        op_loss: op,
    };
    (loss, residual_sq)
}

/// The training objective over `data` without updating anything: examples
/// in file order, batches of `cfg.batch_size`, no dropout. Each term is
/// averaged over the batches that have it.
pub fn dataset_loss(model: &OperandModel, data: &Dataset, cfg: &TrainConfig) -> Result<BatchLoss> {
    cfg.validate()?;
    let all: Vec<&Example> = data.examples.iter().collect();
    if all.is_empty() {
        return Err(Error::Config("no examples to evaluate the loss on".into()));
    }
    let chunks: Vec<&[&Example]> = all.chunks(cfg.batch_size).collect();
    let mut out = BatchLoss::default();
    let mut answers = Vec::new();
    for chunk in &chunks {
        let passes = ordered_map(cfg.threads, chunk.to_vec(), |ex| forward_pass(model, data, ex, cfg, None));
        let passes = passes.into_iter().collect::<Result<Vec<_>>>()?;
        let (bl, _) = summarize(&passes, cfg, chunk.len() as f64);
        out.loss += bl.loss;
        out.cell_loss += bl.cell_loss;
        out.op_loss += bl.op_loss;
        answers.extend(bl.answer_loss);
    }
    let nb = chunks.len() as f64;
    out.loss /= nb;
    out.cell_loss /= nb;
    out.op_loss /= nb;
    out.answer_loss = (!answers.is_empty()).then(|| answers.iter().sum::<f64>() / answers.len() as f64);
    Ok(out)
}

struct Pass<'a> {
    g: Graph<'a>,
    mixture: Var,
    cell: Option<Var>,
    op: Option<Var>,
    residual: Option<f64>,
}

/// Example order for one epoch.
pub fn epoch_order(n: usize, seed: u64, epoch: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed ^ stable_hash(&format!("epoch/{epoch}"))));
    idx
}

/// Run `cfg.epochs` epochs starting after `start_epoch`. After each epoch
/// `on_epoch` sees the metrics and the model; returning `false` stops.
pub fn train_from(
    model: &mut OperandModel,
    data: &Dataset,
    cfg: &TrainConfig,
    start_epoch: usize,
    mut on_epoch: impl FnMut(&EpochMetrics, &OperandModel) -> Result<bool>,
) -> Result<Vec<EpochMetrics>> {
    cfg.validate()?;
    validate(&data.examples, &data.tables)?;
    if data.examples.is_empty() {
        return Err(Error::Config("training set is empty".into()));
    }
    let mut log = Vec::new();
    for epoch in start_epoch + 1..=start_epoch + cfg.epochs {
        let order = epoch_order(data.examples.len(), cfg.seed, epoch);
        let (mut loss, mut cell, mut ans, mut ans_batches, mut op) = (0.0, 0.0, 0.0, 0usize, 0.0);
        let chunks: Vec<&[usize]> = order.chunks(cfg.batch_size).collect();
        for chunk in &chunks {
            let batch: Vec<&Example> = chunk.iter().map(|&i| &data.examples[i]).collect();
            let bl = train_batch(model, data, &batch, cfg, epoch)?;
            loss += bl.loss;
            cell += bl.cell_loss;
            op += bl.op_loss;
            if let Some(a) = bl.answer_loss {
                ans += a;
                ans_batches += 1;
            }
        }
        let nb = chunks.len() as f64;
        let mut m = EpochMetrics {
            epoch,
            loss: loss / nb,
            cell_loss: cell / nb,
            answer_loss: if ans_batches > 0 { ans / ans_batches as f64 } else { 0.0 },
            op_loss: op / nb,
            ..Default::default()
        };
        if cfg.track_train_metrics {
            let r = evaluate_with(&*model, data, cfg.gamma, cfg.threads)?;
            m.train_hard_op_a = r.hard_op_a;
            m.train_final_acc = r.final_acc;
        }
        let go_on = on_epoch(&m, model)?;
        log.push(m);
        if !go_on {
            break;
        }
    }
    Ok(log)
}

pub fn train(model: &mut OperandModel, data: &Dataset, cfg: &TrainConfig) -> Result<Vec<EpochMetrics>> {
    train_from(model, data, cfg, 0, |_, _| Ok(true))
}
