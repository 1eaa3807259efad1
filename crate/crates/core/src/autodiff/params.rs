use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ParamId(usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// What a parameter is, which decides whether the max-norm constraint applies.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ParamKind {
    /// `[out, in]` matrix; each output unit's incoming row is norm-constrained.
    Weight,
    Bias,
    Embedding,
}

/// A trainable tensor together with its Adadelta accumulators.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Parameter {
    name: String,
    kind: ParamKind,
    rows: usize,
    cols: usize,
    value: Vec<f64>,
    #[serde(skip)]
    grad: Vec<f64>,
    /// Running average of squared gradients.
    sq_grad: Vec<f64>,
    /// Running average of squared updates.
    sq_update: Vec<f64>,
}

impl Parameter {
    pub fn name(&self) -> &str {
        &self.name
    }
    pub fn kind(&self) -> ParamKind {
        self.kind
    }
    pub fn rows(&self) -> usize {
        self.rows
    }
    pub fn cols(&self) -> usize {
        self.cols
    }
    pub fn len(&self) -> usize {
        self.value.len()
    }
    pub fn is_empty(&self) -> bool {
        self.value.is_empty()
    }
    pub fn value(&self) -> &[f64] {
        &self.value
    }
    pub fn value_mut(&mut self) -> &mut [f64] {
        &mut self.value
    }
    pub fn grad(&self) -> &[f64] {
        &self.grad
    }
    pub fn grad_mut(&mut self) -> &mut [f64] {
        &mut self.grad
    }

    /// Mutable view of `(value, grad, sq_grad, sq_update)` for optimizers.
    pub fn state_mut(&mut self) -> (&mut [f64], &mut [f64], &mut [f64], &mut [f64]) {
        (
            &mut self.value,
            &mut self.grad,
            &mut self.sq_grad,
            &mut self.sq_update,
        )
    }
}

/// Named registry of every trainable tensor in a model.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ParameterStore {
    params: Vec<Parameter>,
    #[serde(skip)]
    index: BTreeMap<String, ParamId>,
}

impl ParameterStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(
        &mut self,
        name: impl Into<String>,
        kind: ParamKind,
        rows: usize,
        cols: usize,
        value: Vec<f64>,
    ) -> Result<ParamId> {
        let name = name.into();
        if self.index.contains_key(&name) {
            return Err(Error::Contract(format!("parameter `{name}` registered twice")));
        }
        if value.len() != rows * cols {
            return Err(Error::Contract(format!(
                "parameter `{name}` has {} values for shape [{rows}, {cols}]",
                value.len()
            )));
        }
        let id = ParamId(self.params.len());
        let n = value.len();
        self.params.push(Parameter {
            name: name.clone(),
            kind,
            rows,
            cols,
            value,
            grad: vec![0.0; n],
            sq_grad: vec![0.0; n],
            sq_update: vec![0.0; n],
        });
        self.index.insert(name, id);
        Ok(id)
    }

    /// Xavier-uniform weight matrix of shape `[rows, cols]`.
    pub fn xavier(
        &mut self,
        name: impl Into<String>,
        kind: ParamKind,
        rows: usize,
        cols: usize,
        rng: &mut impl Rng,
    ) -> Result<ParamId> {
        let bound = (6.0 / (rows + cols) as f64).sqrt();
        let value = (0..rows * cols).map(|_| rng.gen_range(-bound..bound)).collect();
        self.register(name, kind, rows, cols, value)
    }

    pub fn zeros(
        &mut self,
        name: impl Into<String>,
        kind: ParamKind,
        rows: usize,
        cols: usize,
    ) -> Result<ParamId> {
        self.register(name, kind, rows, cols, vec![0.0; rows * cols])
    }

    pub fn get(&self, id: ParamId) -> &Parameter {
        &self.params[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Parameter {
        &mut self.params[id.0]
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.index.get(name).copied()
    }

    pub fn by_name(&self, name: &str) -> Option<&Parameter> {
        self.id(name).map(|id| self.get(id))
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.params.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Parameter> {
        self.params.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Parameter> {
        self.params.iter_mut()
    }

    pub fn scalar_count(&self) -> usize {
        self.params.iter().map(Parameter::len).sum()
    }

    pub fn zero_grad(&mut self) {
        for p in &mut self.params {
            p.grad.iter_mut().for_each(|g| *g = 0.0);
        }
    }

    /// Add a tape's parameter gradients, scaled by `weight`.
    pub fn accumulate<'a>(&mut self, grads: impl IntoIterator<Item = (ParamId, &'a [f64])>) {
        for (id, g) in grads {
            for (dst, src) in self.params[id.0].grad.iter_mut().zip(g) {
                *dst += src;
            }
        }
    }

    /// Rebuild the name index and gradient buffers after deserialization.
    pub fn restore(&mut self) -> Result<()> {
        self.index.clear();
        for (i, p) in self.params.iter_mut().enumerate() {
            let n = p.rows * p.cols;
            if p.value.len() != n || p.sq_grad.len() != n || p.sq_update.len() != n {
                return Err(Error::Format(format!("parameter `{}` has inconsistent buffers", p.name)));
            }
            p.grad = vec![0.0; n];
            if self.index.insert(p.name.clone(), ParamId(i)).is_some() {
                return Err(Error::Format(format!("duplicate parameter `{}`", p.name)));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn names_are_unique() {
        let mut s = ParameterStore::new();
        s.zeros("w", ParamKind::Weight, 2, 2).unwrap();
        assert!(s.zeros("w", ParamKind::Bias, 1, 1).is_err());
        assert_eq!(s.by_name("w").unwrap().len(), 4);
    }

    #[test]
    fn xavier_is_bounded_and_seeded() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut s = ParameterStore::new();
        let id = s.xavier("w", ParamKind::Weight, 10, 20, &mut rng).unwrap();
        let bound = (6.0f64 / 30.0).sqrt();
        assert!(s.get(id).value().iter().all(|v| v.abs() <= bound));
        let mut rng2 = ChaCha8Rng::seed_from_u64(3);
        let mut s2 = ParameterStore::new();
        s2.xavier("w", ParamKind::Weight, 10, 20, &mut rng2).unwrap();
        assert_eq!(s, s2);
    }

    #[test]
    fn serde_round_trip_restores_index() {
        let mut s = ParameterStore::new();
        s.register("a", ParamKind::Bias, 1, 2, vec![0.1, -2.5e-17]).unwrap();
        let text = serde_json::to_string(&s).unwrap();
        let mut back: ParameterStore = serde_json::from_str(&text).unwrap();
        back.restore().unwrap();
        assert_eq!(back, s);
        assert!(back.id("a").is_some());
    }
}
