use crate::autodiff::{Graph, Var};
use crate::error::{Error, Result};

/// Clamp applied to cell scores inside the log-loss.
pub const CELL_CLAMP: f64 = 1e-9;
/// Stabilizer inside the log of the squared answer error.
pub const ANSWER_EPSILON: f64 = 1e-8;

/// `−Σ [I log C + (1−I) log(1−C)]` over all cells.
pub fn cell_loss(g: &mut Graph, scores: Var, indicator: &[f64]) -> Result<Var> {
    let [n, m] = g.tape.shape(scores);
    if indicator.len() != n * m {
        return Err(Error::Contract(format!("{} indicator entries for {n}x{m} scores", indicator.len())));
    }
    let c = g.tape.clamp(scores, CELL_CLAMP, 1.0 - CELL_CLAMP);
    let log_c = g.tape.log(c)?;
    let neg = g.tape.neg(c);
    let one_minus = g.tape.add_const(neg, 1.0);
    let log_1mc = g.tape.log(one_minus)?;
    let i = g.tape.leaf(n, m, indicator.to_vec())?;
    let not_i = g.tape.leaf(n, m, indicator.iter().map(|x| 1.0 - x).collect())?;
    let a = g.tape.mul(i, log_c)?;
    let b = g.tape.mul(not_i, log_1mc)?;
    let s = g.tape.add(a, b)?;
    let s = g.tape.sum(s);
    Ok(g.tape.neg(s))
}

/// `log(Σ_i (y′_i − y_i)² + ε)` with every prediction on one tape.
pub fn answer_loss(g: &mut Graph, predicted: &[Var], targets: &[f64]) -> Result<Var> {
    if predicted.len() != targets.len() || predicted.is_empty() {
        return Err(Error::Contract("answer loss needs matching, non-empty inputs".into()));
    }
    let mut total = g.tape.constant_scalar(ANSWER_EPSILON);
    for (&p, &y) in predicted.iter().zip(targets) {
        if !g.tape.scalar(p).is_finite() {
            return Err(Error::Numeric(format!("non-finite predicted answer (target {y})")));
        }
        let r = g.tape.add_const(p, -y);
        let sq = g.tape.mul(r, r)?;
        total = g.tape.add(total, sq)?;
    }
    g.tape.log(total)
}

/// `−log Σ_{o∈S} a_o` for the set `S` of operations (by index) that turn
/// the gold operands into the gold answer.
pub fn op_loss(g: &mut Graph, op_weights: Var, consistent: &[usize]) -> Result<Var> {
    let [k, _] = g.tape.shape(op_weights);
    if consistent.is_empty() || consistent.iter().any(|&i| i >= k) {
        return Err(Error::Contract(format!("consistent operations {consistent:?} out of {k}")));
    }
    let mask: Vec<f64> = (0..k).map(|i| if consistent.contains(&i) { 1.0 } else { 0.0 }).collect();
    let m = g.tape.leaf(k, 1, mask)?;
    let a = g.tape.mul(op_weights, m)?;
    let a = g.tape.sum(a);
    let a = g.tape.clamp_min(a, CELL_CLAMP);
    let l = g.tape.log(a)?;
    Ok(g.tape.neg(l))
}

/// Plain-number form of [`answer_loss`].
pub fn answer_loss_value(residuals: &[f64]) -> f64 {
    (residuals.iter().fold(0.0, |a, r| a + r * r) + ANSWER_EPSILON).ln()
}
