use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::params::{ParamId, ParameterStore};
use super::tape::{Tape, Var};
use crate::error::Result;

/// A tape bound to a read-only parameter snapshot, plus the dropout source
/// for this forward pass (absent at evaluation and during gradient checks).
pub struct Graph<'s> {
    pub tape: Tape,
    store: &'s ParameterStore,
    dropout: Option<(f64, ChaCha8Rng)>,
    /// Numeric tokens whose integer part did not fit the binary encoding.
    pub binary_overflows: usize,
}

impl<'s> Graph<'s> {
    pub fn new(store: &'s ParameterStore) -> Self {
        Self {
            tape: Tape::new(),
            store,
            dropout: None,
            binary_overflows: 0,
        }
    }

    pub fn with_tape(store: &'s ParameterStore, tape: Tape) -> Self {
        Self {
            tape,
            store,
            dropout: None,
            binary_overflows: 0,
        }
    }

    /// Enable inverted dropout with drop probability `rate`.
    pub fn with_dropout(mut self, rate: f64, rng: ChaCha8Rng) -> Self {
        if rate > 0.0 {
            self.dropout = Some((rate, rng));
        }
        self
    }

    pub fn store(&self) -> &'s ParameterStore {
        self.store
    }

    pub fn p(&mut self, id: ParamId) -> Var {
        self.tape.param(self.store, id)
    }

    /// Multiply by a fresh keep-mask scaled by `1/(1-rate)`; identity when
    /// dropout is disabled.
    pub fn dropout(&mut self, v: Var) -> Result<Var> {
        let Some((rate, rng)) = self.dropout.as_mut() else {
            return Ok(v);
        };
        let [r, c] = self.tape.shape(v);
        let keep = 1.0 - *rate;
        let mask: Vec<f64> = (0..r * c)
            .map(|_| if rng.gen::<f64>() < keep { 1.0 / keep } else { 0.0 })
            .collect();
        let m = self.tape.leaf(r, c, mask)?;
        self.tape.mul(v, m)
    }

    pub fn into_tape(self) -> Tape {
        self.tape
    }
}
