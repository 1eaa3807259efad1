use super::params::{ParamId, ParameterStore};
use super::tape::{Tape, Var};
use crate::error::{Error, Result};

#[derive(Clone, Debug)]
pub struct GradCheckOptions {
    /// Central-difference step `h`.
    pub step: f64,
    /// Lower bound on the relative-error denominator, so gradients that are
    /// numerically zero are compared in absolute terms.
    pub floor: f64,
    /// Check at most this many evenly spaced entries per parameter.
    pub max_entries: Option<usize>,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        Self {
            step: 1e-5,
            floor: 1e-5,
            max_entries: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParamCheck {
    pub name: String,
    pub checked: usize,
    pub max_rel_err: f64,
    pub max_abs_err: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct GradCheckReport {
    pub loss: f64,
    pub params: Vec<ParamCheck>,
}

impl GradCheckReport {
    pub fn max_rel_err(&self) -> f64 {
        self.params.iter().map(|p| p.max_rel_err).fold(0.0, f64::max)
    }

    pub fn worst(&self) -> Option<&ParamCheck> {
        self.params
            .iter()
            .max_by(|a, b| a.max_rel_err.total_cmp(&b.max_rel_err))
    }
}

fn evaluate<F>(store: &ParameterStore, f: &mut F) -> Result<f64>
where
    F: FnMut(&mut Tape, &ParameterStore) -> Result<Var>,
{
    let mut tape = Tape::new();
    let root = f(&mut tape, store)?;
    let v = tape.scalar(root);
    if !v.is_finite() {
        return Err(Error::Numeric(format!("objective evaluated to {v}")));
    }
    Ok(v)
}

/// Compare tape gradients of `f` with `(f(θ+h) − f(θ−h)) / 2h` for every
/// parameter in `which` (all parameters when `None`). `f` must be
/// deterministic. Parameter values are restored before returning.
pub fn gradient_check<F>(
    store: &mut ParameterStore,
    which: Option<&[ParamId]>,
    opts: &GradCheckOptions,
    mut f: F,
) -> Result<GradCheckReport>
where
    F: FnMut(&mut Tape, &ParameterStore) -> Result<Var>,
{
    let mut tape = Tape::new();
    let root = f(&mut tape, store)?;
    let loss = tape.scalar(root);
    if !loss.is_finite() {
        return Err(Error::Numeric(format!("objective evaluated to {loss}")));
    }
    tape.backward(root)?;
    let mut analytic: Vec<Vec<f64>> = store.iter().map(|p| vec![0.0; p.len()]).collect();
    for (id, g) in tape.param_grads() {
        analytic[id.index()].copy_from_slice(g);
    }
    let ids: Vec<ParamId> = match which {
        Some(w) => w.to_vec(),
        None => store.ids().collect(),
    };
    let mut report = GradCheckReport {
        loss,
        params: Vec::new(),
    };
    for id in ids {
        let n = store.get(id).len();
        let stride = match opts.max_entries {
            Some(k) if k > 0 && n > k => n.div_ceil(k),
            _ => 1,
        };
        let mut check = ParamCheck {
            name: store.get(id).name().to_string(),
            checked: 0,
            max_rel_err: 0.0,
            max_abs_err: 0.0,
        };
        for e in (0..n).step_by(stride) {
            let orig = store.get(id).value()[e];
            store.get_mut(id).value_mut()[e] = orig + opts.step;
            let up = evaluate(store, &mut f);
            store.get_mut(id).value_mut()[e] = orig - opts.step;
            let down = evaluate(store, &mut f);
            store.get_mut(id).value_mut()[e] = orig;
            let numeric = (up? - down?) / (2.0 * opts.step);
            let a = analytic[id.index()][e];
            if !a.is_finite() {
                return Err(Error::Numeric(format!(
                    "analytic gradient of `{}`[{e}] is {a}",
                    check.name
                )));
            }
            let abs = (a - numeric).abs();
            let rel = abs / a.abs().max(numeric.abs()).max(opts.floor);
            check.max_abs_err = check.max_abs_err.max(abs);
            check.max_rel_err = check.max_rel_err.max(rel);
            check.checked += 1;
        }
        report.params.push(check);
    }
    Ok(report)
}
