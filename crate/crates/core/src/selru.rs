//! Cascaded selective recurrent units: each timestep picks a column, then a
//! pivot word, then a parameter word, each conditioned on the one before.

use rand::Rng;

use crate::autodiff::{Axis, Graph, ParamId, ParamKind, ParameterStore, Var};
use crate::encoders::{EncodedQuery, EncodedTable};
use crate::error::{Error, Result};

/// LSTM cell with input `x` and state pair `(q, m)`; gate order i, f, o, g.
#[derive(Clone, Debug)]
pub struct LstmParams {
    pub weight: ParamId,
    pub bias: ParamId,
    pub input: usize,
    pub hidden: usize,
}

impl LstmParams {
    pub fn new(
        store: &mut ParameterStore,
        prefix: &str,
        input: usize,
        hidden: usize,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        Ok(Self {
            weight: store.xavier(format!("{prefix}.lstm.w"), ParamKind::Weight, 4 * hidden, input + hidden, rng)?,
            bias: store.zeros(format!("{prefix}.lstm.b"), ParamKind::Bias, 4 * hidden, 1)?,
            input,
            hidden,
        })
    }
}

#[derive(Clone, Copy, Debug)]
pub struct SelRUState {
    pub q: Var,
    pub m: Var,
    pub prev: Var,
}

/// One LSTM step with the previously selected vector as input.
pub fn selru_lstm_step(g: &mut Graph, lstm: &LstmParams, prev_selected: Var, state: SelRUState) -> Result<SelRUState> {
    let h = lstm.hidden;
    for (what, v, want) in [
        ("input", prev_selected, [lstm.input, 1]),
        ("q", state.q, [h, 1]),
        ("m", state.m, [h, 1]),
    ] {
        let got = g.tape.shape(v);
        if got != want {
            return Err(Error::Contract(format!("lstm {what} has shape {got:?}, expected {want:?}")));
        }
    }
    let w = g.p(lstm.weight);
    let b = g.p(lstm.bias);
    let x = g.tape.concat(&[prev_selected, state.q], Axis::Rows)?;
    let z = g.tape.matmul(w, x)?;
    let z = g.tape.add(z, b)?;
    let ifo = g.tape.slice_rows(z, 0, 3 * h)?;
    let ifo = g.tape.sigmoid(ifo);
    let cand = g.tape.slice_rows(z, 3 * h, h)?;
    let cand = g.tape.tanh(cand);
    let i = g.tape.slice_rows(ifo, 0, h)?;
    let f = g.tape.slice_rows(ifo, h, h)?;
    let o = g.tape.slice_rows(ifo, 2 * h, h)?;
    let keep = g.tape.mul(f, state.m)?;
    let write = g.tape.mul(i, cand)?;
    let m = g.tape.add(keep, write)?;
    let tm = g.tape.tanh(m);
    let q = g.tape.mul(o, tm)?;
    Ok(SelRUState {
        q,
        m,
        prev: prev_selected,
    })
}

/// Scoring network `u·tanh(W[item; contexts] + b)`.
#[derive(Clone, Debug)]
pub struct AttentionParams {
    pub weight: ParamId,
    pub bias: ParamId,
    pub out: ParamId,
    pub item_dim: usize,
    pub context_dim: usize,
}

impl AttentionParams {
    pub fn new(
        store: &mut ParameterStore,
        prefix: &str,
        item_dim: usize,
        context_dim: usize,
        hidden: usize,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        Ok(Self {
            weight: store.xavier(format!("{prefix}.att.w"), ParamKind::Weight, hidden, item_dim + context_dim, rng)?,
            bias: store.zeros(format!("{prefix}.att.b"), ParamKind::Bias, hidden, 1)?,
            out: store.xavier(format!("{prefix}.att.u"), ParamKind::Weight, 1, hidden, rng)?,
            item_dim,
            context_dim,
        })
    }
}

/// Score each column of `items` against fixed contexts, softmax, and pool.
/// Returns `(attention [k, 1], pooled [d, 1])`.
pub fn attentive_pool(g: &mut Graph, att: &AttentionParams, items: Var, contexts: &[Var]) -> Result<(Var, Var)> {
    let [d, k] = g.tape.shape(items);
    if k == 0 {
        return Err(Error::Contract("attentive pooling over zero items".into()));
    }
    if d != att.item_dim {
        return Err(Error::Contract(format!("items have width {d}, expected {}", att.item_dim)));
    }
    let ctx = g.tape.concat(contexts, Axis::Rows)?;
    if g.tape.shape(ctx) != [att.context_dim, 1] {
        return Err(Error::Contract(format!(
            "contexts have width {}, expected {}",
            g.tape.shape(ctx)[0],
            att.context_dim
        )));
    }
    let w = g.p(att.weight);
    let b = g.p(att.bias);
    let u = g.p(att.out);
    let w_item = g.tape.slice_cols(w, 0, d)?;
    let w_ctx = g.tape.slice_cols(w, d, att.context_dim)?;
    let per_item = g.tape.matmul(w_item, items)?;
    let shared = g.tape.matmul(w_ctx, ctx)?;
    let shared = g.tape.add(shared, b)?;
    let shared = g.tape.repeat_cols(shared, k)?;
    let pre = g.tape.add(per_item, shared)?;
    let hidden = g.tape.tanh(pre);
    let hidden = g.dropout(hidden)?;
    let scores = g.tape.matmul(u, hidden)?;
    let scores = g.tape.transpose(scores);
    let attention = g.tape.softmax(scores)?;
    let pooled = g.tape.matmul(items, attention)?;
    Ok((attention, pooled))
}

#[derive(Clone, Debug)]
pub struct SelRU {
    pub lstm: LstmParams,
    pub attention: AttentionParams,
}

impl SelRU {
    fn new(
        store: &mut ParameterStore,
        prefix: &str,
        item_dim: usize,
        state_dim: usize,
        extra_context: usize,
        attention_dim: usize,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        Ok(Self {
            lstm: LstmParams::new(store, prefix, item_dim, state_dim, rng)?,
            attention: AttentionParams::new(
                store,
                prefix,
                item_dim,
                item_dim + state_dim + extra_context,
                attention_dim,
                rng,
            )?,
        })
    }
}

/// Attention weights and selected vectors of one timestep.
#[derive(Clone, Copy, Debug)]
pub struct StepSelection {
    pub column: Var,
    pub pivot: Var,
    pub param: Var,
    pub field: Var,
    pub pivot_vec: Var,
    pub param_vec: Var,
}

#[derive(Clone, Copy, Debug)]
pub struct CascadeState {
    pub column: SelRUState,
    pub pivot: SelRUState,
    pub param: SelRUState,
}

/// The three units with independent parameters.
#[derive(Clone, Debug)]
pub struct Cascade {
    pub column: SelRU,
    pub pivot: SelRU,
    pub param: SelRU,
    pub field_dim: usize,
    pub word_dim: usize,
}

impl Cascade {
    /// `field_dim` is the width of field vectors, `word_dim` the width of
    /// per-word query states (which is also the query vector width).
    pub fn new(
        store: &mut ParameterStore,
        field_dim: usize,
        word_dim: usize,
        attention_dim: usize,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        Ok(Self {
            column: SelRU::new(store, "column", field_dim, word_dim, 0, attention_dim, rng)?,
            pivot: SelRU::new(store, "pivot", word_dim, word_dim, field_dim, attention_dim, rng)?,
            param: SelRU::new(store, "param", word_dim, word_dim, word_dim, attention_dim, rng)?,
            field_dim,
            word_dim,
        })
    }

    pub fn initial_state(&self, g: &mut Graph, query: &EncodedQuery) -> CascadeState {
        let unit = |g: &mut Graph, item: usize| SelRUState {
            q: query.query,
            m: g.tape.zeros(self.word_dim, 1),
            prev: g.tape.zeros(item, 1),
        };
        CascadeState {
            column: unit(g, self.field_dim),
            pivot: unit(g, self.word_dim),
            param: unit(g, self.word_dim),
        }
    }

    pub fn cascade_step(
        &self,
        g: &mut Graph,
        query: &EncodedQuery,
        table: &EncodedTable,
        state: CascadeState,
    ) -> Result<(StepSelection, CascadeState)> {
        let col = selru_lstm_step(g, &self.column.lstm, state.column.prev, state.column)?;
        let cq = g.dropout(col.q)?;
        let (column, field) = attentive_pool(g, &self.column.attention, table.fields, &[col.prev, cq])?;

        let piv = selru_lstm_step(g, &self.pivot.lstm, state.pivot.prev, state.pivot)?;
        let pq = g.dropout(piv.q)?;
        let (pivot, pivot_vec) = attentive_pool(g, &self.pivot.attention, query.states, &[piv.prev, pq, field])?;

        let par = selru_lstm_step(g, &self.param.lstm, state.param.prev, state.param)?;
        let rq = g.dropout(par.q)?;
        let (param, param_vec) = attentive_pool(g, &self.param.attention, query.states, &[par.prev, rq, pivot_vec])?;

        let next = CascadeState {
            column: SelRUState { prev: field, ..col },
            pivot: SelRUState { prev: pivot_vec, ..piv },
            param: SelRUState { prev: param_vec, ..par },
        };
        Ok((
            StepSelection {
                column,
                pivot,
                param,
                field,
                pivot_vec,
                param_vec,
            },
            next,
        ))
    }

    pub fn run_cascade(
        &self,
        g: &mut Graph,
        query: &EncodedQuery,
        table: &EncodedTable,
        timesteps: usize,
    ) -> Result<Vec<StepSelection>> {
        if timesteps == 0 {
            return Err(Error::Config("at least one timestep is required".into()));
        }
        let mut state = self.initial_state(g, query);
        let mut out = Vec::with_capacity(timesteps);
        for _ in 0..timesteps {
            let (sel, next) = self.cascade_step(g, query, table, state)?;
            out.push(sel);
            state = next;
        }
        Ok(out)
    }
}
