//! Questions and tables to vectors: word embeddings with a binary number
//! part, a bi-directional GRU query encoder, and field-aware cell vectors.

mod number;
mod table;
mod vocab;

pub use number::{decode_number, encode_number, parse_number, tokenize, BinaryCodec, Token};
pub use table::{normalize, Cell, Table};
pub use vocab::{Vocabulary, PAD, UNK};

use rand::Rng;

use crate::autodiff::{Axis, Graph, ParamId, ParamKind, ParameterStore, Var};
use crate::error::{Error, Result};

/// One word as the embedding layer sees it.
#[derive(Clone, Debug, PartialEq)]
pub struct WordRef {
    pub index: usize,
    pub value: Option<f64>,
}

/// Learned embedding rows concatenated with the binary number encoding.
#[derive(Clone, Debug)]
pub struct WordEmbedding {
    pub table: ParamId,
    pub word_dim: usize,
    pub codec: BinaryCodec,
}

impl WordEmbedding {
    pub fn new(
        store: &mut ParameterStore,
        vocab_len: usize,
        word_dim: usize,
        codec: BinaryCodec,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let table = store.xavier("embed.words", ParamKind::Embedding, vocab_len, word_dim, rng)?;
        Ok(Self {
            table,
            word_dim,
            codec,
        })
    }

    /// Full width of a word vector.
    pub fn dim(&self) -> usize {
        self.word_dim + self.codec.width
    }

    /// Binary part of one word; zero for strings and for out-of-range numbers.
    pub fn binary(&self, value: Option<f64>, overflows: &mut usize) -> Vec<f64> {
        match value.map(|v| self.codec.encode(v)) {
            Some(Ok(bits)) => bits,
            Some(Err(_)) => {
                *overflows += 1;
                vec![0.0; self.codec.width]
            }
            None => vec![0.0; self.codec.width],
        }
    }

    /// Word vectors as the columns of a `[dim, words.len()]` matrix.
    pub fn embed(&self, g: &mut Graph, words: &[WordRef]) -> Result<Var> {
        let l = words.len();
        let table = g.p(self.table);
        let learned = g.tape.gather(table, &words.iter().map(|w| w.index).collect::<Vec<_>>())?;
        let bw = self.codec.width;
        let mut bits = vec![0.0; bw * l];
        let mut overflows = 0;
        for (c, w) in words.iter().enumerate() {
            for (e, b) in self.binary(w.value, &mut overflows).into_iter().enumerate() {
                bits[e * l + c] = b;
            }
        }
        g.binary_overflows += overflows;
        let binary = g.tape.leaf(bw, l, bits)?;
        g.tape.concat(&[learned, binary], Axis::Rows)
    }
}

pub fn word_refs(vocab: &Vocabulary, tokens: &[Token]) -> Vec<WordRef> {
    tokens
        .iter()
        .map(|t| WordRef {
            index: vocab.lookup(&t.text),
            value: t.value,
        })
        .collect()
}

/// Parameters of one GRU direction. The input projection and both biases
/// are applied to the whole sequence at once.
#[derive(Clone, Debug)]
pub struct GruParams {
    pub input: ParamId,
    pub gates: ParamId,
    pub candidate: ParamId,
    pub bias: ParamId,
    pub hidden: usize,
}

impl GruParams {
    pub fn new(
        store: &mut ParameterStore,
        prefix: &str,
        input_dim: usize,
        hidden: usize,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        Ok(Self {
            input: store.xavier(format!("{prefix}.w_x"), ParamKind::Weight, 3 * hidden, input_dim, rng)?,
            gates: store.xavier(format!("{prefix}.u_zr"), ParamKind::Weight, 2 * hidden, hidden, rng)?,
            candidate: store.xavier(format!("{prefix}.u_h"), ParamKind::Weight, hidden, hidden, rng)?,
            bias: store.zeros(format!("{prefix}.b"), ParamKind::Bias, 3 * hidden, 1)?,
            hidden,
        })
    }

    /// Run over the columns of `xs` in the given order; returns one hidden
    /// state per visited column, in visiting order.
    pub fn run(&self, g: &mut Graph, xs: Var, order: impl Iterator<Item = usize>) -> Result<Vec<Var>> {
        let h_dim = self.hidden;
        let l = g.tape.shape(xs)[1];
        let w = g.p(self.input);
        let b = g.p(self.bias);
        let u_zr = g.p(self.gates);
        let u_h = g.p(self.candidate);
        let proj = g.tape.matmul(w, xs)?;
        let bias = g.tape.repeat_cols(b, l)?;
        let proj = g.tape.add(proj, bias)?;
        let mut h = g.tape.zeros(h_dim, 1);
        let mut out = Vec::with_capacity(l);
        for i in order {
            let xp = g.tape.slice_cols(proj, i, 1)?;
            let x_zr = g.tape.slice_rows(xp, 0, 2 * h_dim)?;
            let x_h = g.tape.slice_rows(xp, 2 * h_dim, h_dim)?;
            let h_zr = g.tape.matmul(u_zr, h)?;
            let pre = g.tape.add(x_zr, h_zr)?;
            let zr = g.tape.sigmoid(pre);
            let z = g.tape.slice_rows(zr, 0, h_dim)?;
            let r = g.tape.slice_rows(zr, h_dim, h_dim)?;
            let rh = g.tape.mul(r, h)?;
            let uh = g.tape.matmul(u_h, rh)?;
            let pre_c = g.tape.add(x_h, uh)?;
            let cand = g.tape.tanh(pre_c);
            let diff = g.tape.sub(cand, h)?;
            let step = g.tape.mul(z, diff)?;
            h = g.tape.add(h, step)?;
            out.push(h);
        }
        Ok(out)
    }
}

/// Per-word states `[2·d_h, l]` (forward over backward) and the pooled
/// query `[→h_l; ←h_1]`.
#[derive(Clone, Copy, Debug)]
pub struct EncodedQuery {
    pub states: Var,
    pub query: Var,
    pub len: usize,
}

#[derive(Clone, Debug)]
pub struct QueryEncoder {
    pub forward: GruParams,
    pub backward: GruParams,
}

impl QueryEncoder {
    pub fn new(store: &mut ParameterStore, input_dim: usize, hidden: usize, rng: &mut impl Rng) -> Result<Self> {
        Ok(Self {
            forward: GruParams::new(store, "query.fwd", input_dim, hidden, rng)?,
            backward: GruParams::new(store, "query.bwd", input_dim, hidden, rng)?,
        })
    }

    pub fn output_dim(&self) -> usize {
        2 * self.forward.hidden
    }

    pub fn encode(&self, g: &mut Graph, words: Var) -> Result<EncodedQuery> {
        let l = g.tape.shape(words)[1];
        if l == 0 {
            return Err(Error::Contract("cannot encode an empty query".into()));
        }
        let fwd = self.forward.run(g, words, 0..l)?;
        let mut bwd = self.backward.run(g, words, (0..l).rev())?;
        bwd.reverse();
        let f = g.tape.concat(&fwd, Axis::Cols)?;
        let b = g.tape.concat(&bwd, Axis::Cols)?;
        let states = g.tape.concat(&[f, b], Axis::Rows)?;
        let states = g.dropout(states)?;
        let query = g.tape.concat(&[fwd[l - 1], bwd[0]], Axis::Rows)?;
        let query = g.dropout(query)?;
        Ok(EncodedQuery { states, query, len: l })
    }
}

/// Field vectors `[d_e, m]` and cell vectors `[d_c, n·m]` (column `j·m + k`).
#[derive(Clone, Copy, Debug)]
pub struct EncodedTable {
    pub fields: Var,
    pub cells: Var,
    pub rows: usize,
    pub cols: usize,
}

#[derive(Clone, Debug)]
pub struct TableEncoder {
    pub transform: ParamId,
    pub bias: ParamId,
    pub cell_dim: usize,
}

impl TableEncoder {
    pub fn new(store: &mut ParameterStore, word_dim: usize, cell_dim: usize, rng: &mut impl Rng) -> Result<Self> {
        Ok(Self {
            transform: store.xavier("table.w_t", ParamKind::Weight, cell_dim, 2 * word_dim, rng)?,
            bias: store.zeros("table.b_t", ParamKind::Bias, cell_dim, 1)?,
            cell_dim,
        })
    }

    pub fn encode(
        &self,
        g: &mut Graph,
        embedding: &WordEmbedding,
        vocab: &Vocabulary,
        table: &Table,
    ) -> Result<EncodedTable> {
        let (n, m) = (table.n_rows(), table.n_cols());
        if m == 0 {
            return Err(Error::Format("table has no columns".into()));
        }
        if table.rows().iter().any(|r| r.len() != m) {
            return Err(Error::Format("ragged table".into()));
        }
        // headers: mean of token vectors
        let mut header_words = Vec::new();
        let mut averaging = Vec::new();
        for (k, h) in table.headers().iter().enumerate() {
            let mut toks = tokenize(h);
            if toks.is_empty() {
                toks.push(Token {
                    text: String::new(),
                    value: None,
                });
            }
            let w = 1.0 / toks.len() as f64;
            for t in toks {
                header_words.push(WordRef {
                    index: vocab.lookup(&t.text),
                    value: t.value,
                });
                averaging.push((k, w));
            }
        }
        let hw = embedding.embed(g, &header_words)?;
        let mut avg = vec![0.0; averaging.len() * m];
        for (i, (k, w)) in averaging.into_iter().enumerate() {
            avg[i * m + k] = w;
        }
        let avg = g.tape.leaf(header_words.len(), m, avg)?;
        let fields = g.tape.matmul(hw, avg)?;

        let cell_words: Vec<WordRef> = table
            .rows()
            .iter()
            .flatten()
            .map(|c| WordRef {
                index: vocab.lookup(&c.normalized()),
                value: c.numeric,
            })
            .collect();
        let cells = if n == 0 {
            g.tape.zeros(self.cell_dim, 0)
        } else {
            let cw = embedding.embed(g, &cell_words)?;
            let tiled = g.tape.concat(&vec![fields; n], Axis::Cols)?;
            let x = g.tape.concat(&[cw, tiled], Axis::Rows)?;
            let w = g.p(self.transform);
            let b = g.p(self.bias);
            let pre = g.tape.matmul(w, x)?;
            let bias = g.tape.repeat_cols(b, n * m)?;
            let pre = g.tape.add(pre, bias)?;
            let c = g.tape.tanh(pre);
            g.dropout(c)?
        };
        Ok(EncodedTable {
            fields,
            cells,
            rows: n,
            cols: m,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn setup(vocab: &Vocabulary) -> (ParameterStore, WordEmbedding, QueryEncoder, TableEncoder) {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut store = ParameterStore::new();
        let emb = WordEmbedding::new(&mut store, vocab.len(), 4, BinaryCodec::new(8, 4), &mut rng).unwrap();
        let q = QueryEncoder::new(&mut store, emb.dim(), 3, &mut rng).unwrap();
        let t = TableEncoder::new(&mut store, emb.dim(), 5, &mut rng).unwrap();
        (store, emb, q, t)
    }

    #[test]
    fn non_numeric_tokens_have_zero_binary_part() {
        let vocab = Vocabulary::build(["hello", "0.5"]);
        let (store, emb, _, _) = setup(&vocab);
        let mut g = Graph::new(&store);
        let words = word_refs(&vocab, &tokenize("hello 0.5 hello"));
        let v = emb.embed(&mut g, &words).unwrap();
        let d = emb.dim();
        let col = |c: usize| -> Vec<f64> { (0..d).map(|e| g.tape.data(v)[e * 3 + c]).collect() };
        let (a, half, b) = (col(0), col(1), col(2));
        assert!(a[4..].iter().all(|&x| x == 0.0));
        assert_eq!(a, b);
        // sign, 8 int bits, then the first fraction bit
        assert_eq!(half[4 + 9], 1.0);
        assert!(half[4 + 10..].iter().all(|&x| x == 0.0));
    }

    #[test]
    fn query_shapes_and_pooling() {
        let vocab = Vocabulary::build(["a", "b", "c"]);
        let (store, emb, enc, _) = setup(&vocab);
        for l in 1..4 {
            let mut g = Graph::new(&store);
            let toks: Vec<Token> = tokenize("a b c").into_iter().take(l).collect();
            let w = emb.embed(&mut g, &word_refs(&vocab, &toks)).unwrap();
            let q = enc.encode(&mut g, w).unwrap();
            assert_eq!(g.tape.shape(q.states), [6, l]);
            assert_eq!(g.tape.shape(q.query), [6, 1]);
            let s = g.tape.data(q.states).to_vec();
            let qv = g.tape.data(q.query).to_vec();
            for e in 0..3 {
                assert_eq!(qv[e], s[e * l + l - 1], "forward final state");
                assert_eq!(qv[3 + e], s[(3 + e) * l], "backward state at word 1");
            }
        }
        let mut g = Graph::new(&store);
        let empty = g.tape.zeros(emb.dim(), 0);
        assert!(enc.encode(&mut g, empty).is_err());
    }

    #[test]
    fn reversed_query_changes_pooled_vector() {
        let vocab = Vocabulary::build(["what", "is", "total", "hr"]);
        let (store, emb, enc, _) = setup(&vocab);
        let run = |text: &str| {
            let mut g = Graph::new(&store);
            let w = emb.embed(&mut g, &word_refs(&vocab, &tokenize(text))).unwrap();
            let q = enc.encode(&mut g, w).unwrap();
            g.tape.data(q.query).to_vec()
        };
        assert_ne!(run("what is total hr"), run("hr total is what"));
        assert_eq!(run("what is total hr"), run("what is total hr"));
    }

    #[test]
    fn cell_vectors_are_field_aware_and_bounded() {
        let vocab = Vocabulary::build(["5", "x", "y"]);
        let (store, emb, _, enc) = setup(&vocab);
        let table = Table::new(vec!["x", "y"], vec![vec!["5".into(), "5".into()]]).unwrap();
        let mut g = Graph::new(&store);
        let t = enc.encode(&mut g, &emb, &vocab, &table).unwrap();
        let c = g.tape.data(t.cells).to_vec();
        assert!(c.iter().all(|v| v.abs() < 1.0));
        let col = |k: usize| -> Vec<f64> { (0..5).map(|e| c[e * 2 + k]).collect() };
        assert_ne!(col(0), col(1));

        let one = Table::new(vec!["x"], vec![vec!["y".into()]]).unwrap();
        let mut g = Graph::new(&store);
        let t = enc.encode(&mut g, &emb, &vocab, &one).unwrap();
        assert_eq!(g.tape.shape(t.fields), [emb.dim(), 1]);
        assert_eq!(g.tape.shape(t.cells), [5, 1]);
    }
}
