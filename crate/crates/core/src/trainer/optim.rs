use crate::autodiff::{ParamKind, ParameterStore};
use crate::error::{Error, Result};

/// One Adadelta step over every parameter, then zero the gradients.
/// Nothing is written when any gradient is non-finite.
pub fn adadelta_step(store: &mut ParameterStore, rho: f64, eps: f64, lr: f64) -> Result<()> {
    if let Some(p) = store.iter().find(|p| p.grad().iter().any(|g| !g.is_finite())) {
        return Err(Error::Numeric(format!("non-finite gradient in parameter {}", p.name())));
    }
    for p in store.iter_mut() {
        let (value, grad, sq_grad, sq_update) = p.state_mut();
        for i in 0..value.len() {
            let g = grad[i];
            sq_grad[i] = rho * sq_grad[i] + (1.0 - rho) * g * g;
            let delta = -((sq_update[i] + eps).sqrt() / (sq_grad[i] + eps).sqrt()) * g;
            sq_update[i] = rho * sq_update[i] + (1.0 - rho) * delta * delta;
            value[i] += lr * delta;
        }
    }
    store.zero_grad();
    Ok(())
}

/// Rescale each output unit's incoming weight vector (a row of every
/// `Weight` matrix) to l2 norm at most `c`.
pub fn maxnorm_constraint(store: &mut ParameterStore, c: f64) {
    for p in store.iter_mut() {
        if p.kind() != ParamKind::Weight {
            continue;
        }
        let cols = p.cols();
        for row in p.value_mut().chunks_mut(cols) {
            let norm = row.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > c {
                let s = c / norm;
                row.iter_mut().for_each(|x| *x *= s);
            }
        }
    }
}
