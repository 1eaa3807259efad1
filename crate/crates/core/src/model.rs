//! The full question-answering network: encoders, cascade, row RNN,
//! operand selector and operation solver wired together.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{argmax_first, Graph, ParameterStore, Var};
use crate::encoders::{tokenize, word_refs, BinaryCodec, EncodedQuery, EncodedTable, QueryEncoder, Table, TableEncoder, Token, Vocabulary, WordEmbedding};
use crate::error::{Error, Result};
use crate::opsolver::{hard_op, soft_mixture, Answer, NumericGrid, Operation, OperationSelector};
use crate::rowsel::{cell_scores, threshold_operands, OperandSet, RowRnn, RowScorer, RowScoring};
use crate::selru::{Cascade, StepSelection};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub word_dim: usize,
    pub int_bits: u32,
    pub frac_bits: u32,
    /// Zero-pad the binary number part to this width (defaults to its
    /// natural width `1 + int_bits + frac_bits`).
    #[serde(default)]
    pub binary_width: Option<usize>,
    pub hidden_dim: usize,
    pub cell_dim: usize,
    pub row_dim: usize,
    pub attention_dim: usize,
    pub op_dim: usize,
    pub timesteps: usize,
    pub row_scoring: RowScoring,
    pub reverse_epsilon: f64,
    pub operations: Vec<Operation>,
}

impl ModelConfig {
    /// Small dimensions that train in seconds on one core.
    pub fn desk() -> Self {
        Self {
            word_dim: 32,
            int_bits: 16,
            frac_bits: 15,
            binary_width: None,
            hidden_dim: 32,
            cell_dim: 48,
            row_dim: 32,
            attention_dim: 32,
            op_dim: 32,
            timesteps: 4,
            row_scoring: RowScoring::Shared,
            reverse_epsilon: 1.0,
            operations: Operation::ALL.to_vec(),
        }
    }

    /// Full-size configuration with 300-wide states.
    pub fn full() -> Self {
        Self {
            word_dim: 300,
            binary_width: Some(300),
            hidden_dim: 300,
            cell_dim: 300,
            row_dim: 300,
            attention_dim: 300,
            op_dim: 300,
            ..Self::desk()
        }
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "desk" => Ok(Self::desk()),
            "full" => Ok(Self::full()),
            _ => Err(Error::Config(format!("unknown dimension preset `{name}`"))),
        }
    }

    pub fn codec(&self) -> Result<BinaryCodec> {
        match self.binary_width {
            None => Ok(BinaryCodec::new(self.int_bits, self.frac_bits)),
            Some(w) => BinaryCodec::padded(self.int_bits, self.frac_bits, w),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let dims = [
            ("word_dim", self.word_dim),
            ("hidden_dim", self.hidden_dim),
            ("cell_dim", self.cell_dim),
            ("row_dim", self.row_dim),
            ("attention_dim", self.attention_dim),
            ("op_dim", self.op_dim),
            ("timesteps", self.timesteps),
        ];
        if let Some((name, _)) = dims.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("{name} must be positive")));
        }
        if !(self.reverse_epsilon > 0.0) {
            return Err(Error::Config("reverse_epsilon must be positive".into()));
        }
        if self.int_bits > 52 {
            return Err(Error::Config("int_bits above 52 cannot be represented exactly".into()));
        }
        self.codec()?;
        Ok(())
    }
}

/// Everything one forward pass produces, as nodes on the graph's tape.
#[derive(Clone, Debug)]
pub struct Forward {
    pub query: EncodedQuery,
    pub table: EncodedTable,
    pub steps: Vec<StepSelection>,
    pub row_scores: Var,
    pub cells: Var,
    pub op_weights: Var,
    pub mixture: Var,
    pub per_op: Vec<Var>,
    pub grid: NumericGrid,
}

/// Test-time output for one question.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub operation: Operation,
    pub operands: OperandSet,
    /// `None` when nothing was selected or the operator could not apply.
    pub answer: Option<Answer>,
    pub soft_answer: f64,
    pub op_weights: Vec<f64>,
    pub cell_scores: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct OperandModel {
    pub config: ModelConfig,
    pub vocab: Vocabulary,
    pub store: ParameterStore,
    pub embedding: WordEmbedding,
    pub query_encoder: QueryEncoder,
    pub table_encoder: TableEncoder,
    pub cascade: Cascade,
    pub row_rnn: RowRnn,
    pub scorer: RowScorer,
    pub selector: OperationSelector,
}

impl OperandModel {
    pub fn new(config: ModelConfig, vocab: Vocabulary, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParameterStore::new();
        let c = &config;
        let embedding = WordEmbedding::new(&mut store, vocab.len(), c.word_dim, c.codec()?, &mut rng)?;
        let query_encoder = QueryEncoder::new(&mut store, embedding.dim(), c.hidden_dim, &mut rng)?;
        let table_encoder = TableEncoder::new(&mut store, embedding.dim(), c.cell_dim, &mut rng)?;
        let word = query_encoder.output_dim();
        let field = embedding.dim();
        let cascade = Cascade::new(&mut store, field, word, c.attention_dim, &mut rng)?;
        let row_rnn = RowRnn::new(&mut store, field + 2 * word, c.cell_dim, c.row_dim, &mut rng)?;
        let scorer = RowScorer::new(&mut store, c.row_scoring, c.row_dim, &mut rng)?;
        let selector = OperationSelector::new(&mut store, c.operations.clone(), c.op_dim, word, c.attention_dim, &mut rng)?;
        Ok(Self {
            config,
            vocab,
            store,
            embedding,
            query_encoder,
            table_encoder,
            cascade,
            row_rnn,
            scorer,
            selector,
        })
    }

    /// Rebuild the network around previously trained parameters.
    pub fn with_store(config: ModelConfig, vocab: Vocabulary, mut store: ParameterStore) -> Result<Self> {
        store.restore()?;
        let mut model = Self::new(config, vocab, 0)?;
        if model.store.len() != store.len() {
            return Err(Error::Format(format!(
                "checkpoint holds {} parameters, the configuration needs {}",
                store.len(),
                model.store.len()
            )));
        }
        for (want, got) in model.store.iter().zip(store.iter()) {
            if want.name() != got.name() || want.rows() != got.rows() || want.cols() != got.cols() {
                return Err(Error::Format(format!(
                    "checkpoint parameter {} [{}x{}] does not match {} [{}x{}]",
                    got.name(),
                    got.rows(),
                    got.cols(),
                    want.name(),
                    want.rows(),
                    want.cols()
                )));
            }
        }
        model.store = store;
        Ok(model)
    }

    pub fn operations(&self) -> &[Operation] {
        &self.selector.ops
    }

    pub fn tokens(&self, question: &str) -> Result<Vec<Token>> {
        let t = tokenize(question);
        if t.is_empty() {
            return Err(Error::Contract("question has no tokens".into()));
        }
        Ok(t)
    }

    pub fn forward(&self, g: &mut Graph, tokens: &[Token], table: &Table) -> Result<Forward> {
        if table.n_rows() == 0 {
            return Err(Error::Contract("table has no rows".into()));
        }
        let words = self.embedding.embed(g, &word_refs(&self.vocab, tokens))?;
        let query = self.query_encoder.encode(g, words)?;
        let enc = self.table_encoder.encode(g, &self.embedding, &self.vocab, table)?;
        let steps = self.cascade.run_cascade(g, &query, &enc, self.config.timesteps)?;
        let mut rows = self.row_rnn.initial(g, enc.rows);
        for s in &steps {
            rows = self.row_rnn.row_step(g, s, &enc, rows)?;
        }
        let row_scores = self.scorer.score_rows(g, rows.rows)?;
        let last = steps.last().expect("at least one timestep");
        let cells = cell_scores(g, row_scores, last.column)?;
        let op_weights = self.selector.select_operation(g, query.query)?;
        let grid = NumericGrid::from_table(table, self.config.reverse_epsilon)?;
        let (mixture, per_op) = soft_mixture(g, &self.selector.ops, op_weights, cells, &grid)?;
        Ok(Forward {
            query,
            table: enc,
            steps,
            row_scores,
            cells,
            op_weights,
            mixture,
            per_op,
            grid,
        })
    }

    /// Read off the test-time answer from a finished forward pass.
    pub fn decide(&self, g: &Graph, fwd: &Forward, table: &Table, gamma: f64) -> Result<Prediction> {
        let op_weights = g.tape.data(fwd.op_weights).to_vec();
        let operation = self.selector.ops[argmax_first(&op_weights)];
        let scores = g.tape.data(fwd.cells).to_vec();
        let operands = threshold_operands(&scores, table.n_cols(), gamma)?;
        let answer = if operands.is_empty() {
            None
        } else {
            match hard_op(operation, &operands, table) {
                Ok(a) => Some(a),
                Err(Error::Semantics { .. }) | Err(Error::EmptySelection(_)) => None,
                Err(e) => return Err(e),
            }
        };
        Ok(Prediction {
            operation,
            operands,
            answer,
            soft_answer: g.tape.scalar(fwd.mixture),
            op_weights,
            cell_scores: scores,
        })
    }

    pub fn predict(&self, question: &str, table: &Table, gamma: f64) -> Result<Prediction> {
        let tokens = self.tokens(question)?;
        let mut g = Graph::new(&self.store);
        let fwd = self.forward(&mut g, &tokens, table)?;
        self.decide(&g, &fwd, table, gamma)
    }
}
