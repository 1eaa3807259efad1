//! Dynamic reverse-mode tape over dense row-major `f64` matrices.
//!
//! Every value is a matrix of shape `[rows, cols]`; column vectors are
//! `[k, 1]` and scalars `[1, 1]`. Nodes are appended in evaluation order,
//! so creation order is already a topological order and backward simply
//! walks the arena in reverse.

use std::fmt::Write as _;

use super::params::{ParamId, ParameterStore};
use crate::error::{Error, Result};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Axis {
    Rows,
    Cols,
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    Param(ParamId),
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Div(Var, Var),
    ScalarMul(Var, Var),
    Scale(Var, f64),
    AddConst(Var),
    Neg(Var),
    Tanh(Var),
    Sigmoid(Var),
    Log(Var),
    Softmax(Var),
    ReduceMax(Var, usize),
    RowMax(Var, Vec<usize>),
    Sum(Var),
    Concat(Vec<Var>, Axis),
    SliceRows(Var, usize),
    SliceCols(Var, usize),
    Transpose(Var),
    Reshape(Var),
    RepeatCols(Var),
    Gather(Var, Vec<usize>),
    GroupWeightedSum(Var, Var, usize),
    Clamp(Var, f64, f64),
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::Param(_) => "param",
            Op::MatMul(..) => "matmul",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Mul(..) => "mul",
            Op::Div(..) => "div",
            Op::ScalarMul(..) => "scalar_mul",
            Op::Scale(..) => "scale",
            Op::AddConst(..) => "add_const",
            Op::Neg(..) => "neg",
            Op::Tanh(..) => "tanh",
            Op::Sigmoid(..) => "sigmoid",
            Op::Log(..) => "log",
            Op::Softmax(..) => "softmax",
            Op::ReduceMax(..) => "reduce_max",
            Op::RowMax(..) => "row_max",
            Op::Sum(..) => "sum",
            Op::Concat(..) => "concat",
            Op::SliceRows(..) => "slice_rows",
            Op::SliceCols(..) => "slice_cols",
            Op::Transpose(..) => "transpose",
            Op::Reshape(..) => "reshape",
            Op::RepeatCols(..) => "repeat_cols",
            Op::Gather(..) => "gather",
            Op::GroupWeightedSum(..) => "group_weighted_sum",
            Op::Clamp(..) => "clamp",
        }
    }

    fn parents(&self) -> Vec<Var> {
        match self {
            Op::Leaf | Op::Param(_) => vec![],
            Op::MatMul(a, b)
            | Op::Add(a, b)
            | Op::Sub(a, b)
            | Op::Mul(a, b)
            | Op::Div(a, b)
            | Op::ScalarMul(a, b)
            | Op::GroupWeightedSum(a, b, _) => vec![*a, *b],
            Op::Scale(a, _)
            | Op::AddConst(a)
            | Op::Neg(a)
            | Op::Tanh(a)
            | Op::Sigmoid(a)
            | Op::Log(a)
            | Op::Softmax(a)
            | Op::ReduceMax(a, _)
            | Op::RowMax(a, _)
            | Op::Sum(a)
            | Op::SliceRows(a, _)
            | Op::SliceCols(a, _)
            | Op::Transpose(a)
            | Op::Reshape(a)
            | Op::RepeatCols(a)
            | Op::Gather(a, _)
            | Op::Clamp(a, _, _) => vec![*a],
            Op::Concat(parts, _) => parts.clone(),
        }
    }
}

/// One value on the tape: data, accumulated gradient, and the record of
/// the operation that produced it.
#[derive(Clone, Debug)]
pub struct Node {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
    grad: Vec<f64>,
    op: Op,
}

impl Node {
    pub fn shape(&self) -> [usize; 2] {
        [self.rows, self.cols]
    }
    pub fn data(&self) -> &[f64] {
        &self.data
    }
    pub fn grad(&self) -> &[f64] {
        &self.grad
    }
}

/// Append-only computation graph. Rebuilt per example.
#[derive(Default, Debug, Clone)]
pub struct Tape {
    nodes: Vec<Node>,
    param_vars: Vec<Option<Var>>,
}

/// `c = a·b + beta·c` on row-major buffers; `ta`/`tb` read the operand
/// transposed. `a` is `m×k` after transposition, `b` is `k×n`.
#[allow(clippy::too_many_arguments)]
fn gemm(m: usize, k: usize, n: usize, a: &[f64], ta: bool, b: &[f64], tb: bool, c: &mut [f64]) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    if m == 0 || n == 0 {
        return;
    }
    let (rsa, csa) = if ta { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if tb { (1, k as isize) } else { (n as isize, 1) };
    // SAFETY: the slices hold exactly the extents described by the strides.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            1.0,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn node(&self, v: Var) -> &Node {
        &self.nodes[v.0]
    }

    pub fn shape(&self, v: Var) -> [usize; 2] {
        self.nodes[v.0].shape()
    }

    pub fn data(&self, v: Var) -> &[f64] {
        &self.nodes[v.0].data
    }

    pub fn grad(&self, v: Var) -> &[f64] {
        &self.nodes[v.0].grad
    }

    /// Value of a `[1, 1]` node.
    pub fn scalar(&self, v: Var) -> f64 {
        debug_assert_eq!(self.shape(v), [1, 1]);
        self.nodes[v.0].data[0]
    }

    fn push(&mut self, rows: usize, cols: usize, data: Vec<f64>, op: Op) -> Var {
        debug_assert_eq!(data.len(), rows * cols);
        self.nodes.push(Node {
            rows,
            cols,
            grad: vec![0.0; data.len()],
            data,
            op,
        });
        Var(self.nodes.len() - 1)
    }

    /// A leaf holding caller data. Gradients still accumulate on it.
    pub fn leaf(&mut self, rows: usize, cols: usize, data: Vec<f64>) -> Result<Var> {
        if data.len() != rows * cols {
            return Err(Error::Contract(format!(
                "leaf of shape [{rows}, {cols}] given {} values",
                data.len()
            )));
        }
        Ok(self.push(rows, cols, data, Op::Leaf))
    }

    pub fn column(&mut self, data: Vec<f64>) -> Var {
        let n = data.len();
        self.push(n, 1, data, Op::Leaf)
    }

    pub fn constant_scalar(&mut self, x: f64) -> Var {
        self.push(1, 1, vec![x], Op::Leaf)
    }

    pub fn zeros(&mut self, rows: usize, cols: usize) -> Var {
        self.push(rows, cols, vec![0.0; rows * cols], Op::Leaf)
    }

    /// Leaf bound to a stored parameter. Repeated calls return the same node.
    pub fn param(&mut self, store: &ParameterStore, id: ParamId) -> Var {
        let idx = id.index();
        if idx >= self.param_vars.len() {
            self.param_vars.resize(idx + 1, None);
        }
        if let Some(v) = self.param_vars[idx] {
            return v;
        }
        let p = store.get(id);
        let v = self.push(p.rows(), p.cols(), p.value().to_vec(), Op::Param(id));
        self.param_vars[idx] = Some(v);
        v
    }

    /// Parameter gradients accumulated on this tape, in parameter order.
    pub fn param_grads(&self) -> impl Iterator<Item = (ParamId, &[f64])> {
        self.param_vars
            .iter()
            .filter_map(|v| *v)
            .map(move |v| match self.nodes[v.0].op {
                Op::Param(id) => (id, self.nodes[v.0].grad.as_slice()),
                _ => unreachable!("param_vars only holds parameter leaves"),
            })
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa != sb {
            return Err(Error::Dimension { op, lhs: sa, rhs: sb });
        }
        Ok(())
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let ([p, q], [q2, r]) = (self.shape(a), self.shape(b));
        if q != q2 {
            return Err(Error::Dimension {
                op: "matmul",
                lhs: [p, q],
                rhs: [q2, r],
            });
        }
        let mut out = vec![0.0; p * r];
        gemm(p, q, r, self.data(a), false, self.data(b), false, &mut out);
        Ok(self.push(p, r, out, Op::MatMul(a, b)))
    }

    fn zip(&mut self, op: Op, a: Var, b: Var, f: impl Fn(f64, f64) -> f64) -> Result<Var> {
        self.same_shape(op.name(), a, b)?;
        let [r, c] = self.shape(a);
        let out = self
            .data(a)
            .iter()
            .zip(self.data(b))
            .map(|(&x, &y)| f(x, y))
            .collect();
        Ok(self.push(r, c, out, op))
    }

    fn map(&mut self, op: Op, a: Var, f: impl Fn(f64) -> f64) -> Var {
        let [r, c] = self.shape(a);
        let out = self.data(a).iter().map(|&x| f(x)).collect();
        self.push(r, c, out, op)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip(Op::Add(a, b), a, b, |x, y| x + y)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip(Op::Sub(a, b), a, b, |x, y| x - y)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip(Op::Mul(a, b), a, b, |x, y| x * y)
    }

    /// Elementwise quotient; the divisor must be nonzero everywhere.
    pub fn div(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.data(b).iter().any(|&x| x == 0.0) {
            return Err(Error::Domain {
                op: "div",
                detail: "division by zero".into(),
            });
        }
        self.zip(Op::Div(a, b), a, b, |x, y| x / y)
    }

    /// `s · a` where `s` is a `[1, 1]` node: the only broadcast allowed.
    pub fn scalar_mul(&mut self, s: Var, a: Var) -> Result<Var> {
        if self.shape(s) != [1, 1] {
            return Err(Error::Dimension {
                op: "scalar_mul",
                lhs: self.shape(s),
                rhs: self.shape(a),
            });
        }
        let k = self.scalar(s);
        let [r, c] = self.shape(a);
        let out = self.data(a).iter().map(|&x| k * x).collect();
        Ok(self.push(r, c, out, Op::ScalarMul(s, a)))
    }

    pub fn scale(&mut self, a: Var, k: f64) -> Var {
        self.map(Op::Scale(a, k), a, |x| k * x)
    }

    pub fn add_const(&mut self, a: Var, k: f64) -> Var {
        self.map(Op::AddConst(a), a, |x| x + k)
    }

    pub fn neg(&mut self, a: Var) -> Var {
        self.map(Op::Neg(a), a, |x| -x)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.map(Op::Tanh(a), a, f64::tanh)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.map(Op::Sigmoid(a), a, sigmoid)
    }

    pub fn log(&mut self, a: Var) -> Result<Var> {
        if let Some(bad) = self.data(a).iter().find(|&&x| !(x > 0.0)) {
            return Err(Error::Domain {
                op: "log",
                detail: format!("argument {bad} is not positive"),
            });
        }
        Ok(self.map(Op::Log(a), a, f64::ln))
    }

    /// Softmax over all entries of a column vector, max-shifted.
    pub fn softmax(&mut self, a: Var) -> Result<Var> {
        let [r, c] = self.shape(a);
        if r * c == 0 {
            return Err(Error::Dimension {
                op: "softmax",
                lhs: [r, c],
                rhs: [1, 1],
            });
        }
        let x = self.data(a);
        let m = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let e: Vec<f64> = x.iter().map(|&v| (v - m).exp()).collect();
        let z: f64 = e.iter().sum();
        let out = e.into_iter().map(|v| v / z).collect();
        Ok(self.push(r, c, out, Op::Softmax(a)))
    }

    /// Maximum over every entry; gradient goes to the first maximal index.
    pub fn reduce_max(&mut self, a: Var) -> Result<Var> {
        let x = self.data(a);
        if x.is_empty() {
            return Err(Error::Dimension {
                op: "reduce_max",
                lhs: self.shape(a),
                rhs: [1, 1],
            });
        }
        let idx = argmax_first(x);
        let v = x[idx];
        Ok(self.push(1, 1, vec![v], Op::ReduceMax(a, idx)))
    }

    /// Coordinatewise maximum across columns: `[r, c] -> [r, 1]`.
    pub fn row_max(&mut self, a: Var) -> Result<Var> {
        let [r, c] = self.shape(a);
        if c == 0 {
            return Err(Error::Dimension {
                op: "row_max",
                lhs: [r, c],
                rhs: [r, 1],
            });
        }
        let x = self.data(a);
        let idx: Vec<usize> = (0..r).map(|i| argmax_first(&x[i * c..(i + 1) * c])).collect();
        let out = idx.iter().enumerate().map(|(i, &j)| x[i * c + j]).collect();
        Ok(self.push(r, 1, out, Op::RowMax(a, idx)))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.data(a).iter().sum();
        self.push(1, 1, vec![s], Op::Sum(a))
    }

    pub fn concat(&mut self, parts: &[Var], axis: Axis) -> Result<Var> {
        let first = *parts
            .first()
            .ok_or_else(|| Error::Contract("concat of zero parts".into()))?;
        let [r0, c0] = self.shape(first);
        for &p in &parts[1..] {
            let [r, c] = self.shape(p);
            let ok = match axis {
                Axis::Rows => c == c0,
                Axis::Cols => r == r0,
            };
            if !ok {
                return Err(Error::Dimension {
                    op: "concat",
                    lhs: [r0, c0],
                    rhs: [r, c],
                });
            }
        }
        let (rows, cols, out) = match axis {
            Axis::Rows => {
                let rows = parts.iter().map(|&p| self.shape(p)[0]).sum();
                let mut out = Vec::with_capacity(rows * c0);
                for &p in parts {
                    out.extend_from_slice(self.data(p));
                }
                (rows, c0, out)
            }
            Axis::Cols => {
                let cols: usize = parts.iter().map(|&p| self.shape(p)[1]).sum();
                let mut out = Vec::with_capacity(r0 * cols);
                for i in 0..r0 {
                    for &p in parts {
                        let c = self.shape(p)[1];
                        out.extend_from_slice(&self.data(p)[i * c..(i + 1) * c]);
                    }
                }
                (r0, cols, out)
            }
        };
        Ok(self.push(rows, cols, out, Op::Concat(parts.to_vec(), axis)))
    }

    pub fn slice_rows(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let [r, c] = self.shape(a);
        if start + len > r {
            return Err(Error::Dimension {
                op: "slice_rows",
                lhs: [r, c],
                rhs: [start + len, c],
            });
        }
        let out = self.data(a)[start * c..(start + len) * c].to_vec();
        Ok(self.push(len, c, out, Op::SliceRows(a, start)))
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let [r, c] = self.shape(a);
        if start + len > c {
            return Err(Error::Dimension {
                op: "slice_cols",
                lhs: [r, c],
                rhs: [r, start + len],
            });
        }
        let x = self.data(a);
        let mut out = Vec::with_capacity(r * len);
        for i in 0..r {
            out.extend_from_slice(&x[i * c + start..i * c + start + len]);
        }
        Ok(self.push(r, len, out, Op::SliceCols(a, start)))
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let [r, c] = self.shape(a);
        let x = self.data(a);
        let mut out = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                out[j * r + i] = x[i * c + j];
            }
        }
        self.push(c, r, out, Op::Transpose(a))
    }

    /// Row-major reinterpretation with the same element count.
    pub fn reshape(&mut self, a: Var, rows: usize, cols: usize) -> Result<Var> {
        let [r, c] = self.shape(a);
        if r * c != rows * cols {
            return Err(Error::Dimension {
                op: "reshape",
                lhs: [r, c],
                rhs: [rows, cols],
            });
        }
        let out = self.data(a).to_vec();
        Ok(self.push(rows, cols, out, Op::Reshape(a)))
    }

    /// Tile a column vector `[r, 1]` into `[r, n]`.
    pub fn repeat_cols(&mut self, a: Var, n: usize) -> Result<Var> {
        let [r, c] = self.shape(a);
        if c != 1 {
            return Err(Error::Dimension {
                op: "repeat_cols",
                lhs: [r, c],
                rhs: [r, 1],
            });
        }
        let x = self.data(a);
        let mut out = Vec::with_capacity(r * n);
        for &v in x {
            out.extend(std::iter::repeat(v).take(n));
        }
        Ok(self.push(r, n, out, Op::RepeatCols(a)))
    }

    /// Rows `idx` of a `[v, d]` table laid out as the columns of a `[d, k]` result.
    pub fn gather(&mut self, table: Var, idx: &[usize]) -> Result<Var> {
        let [v, d] = self.shape(table);
        if let Some(&bad) = idx.iter().find(|&&i| i >= v) {
            return Err(Error::Dimension {
                op: "gather",
                lhs: [v, d],
                rhs: [bad, d],
            });
        }
        let x = self.data(table);
        let k = idx.len();
        let mut out = vec![0.0; d * k];
        for (col, &row) in idx.iter().enumerate() {
            for e in 0..d {
                out[e * k + col] = x[row * d + e];
            }
        }
        Ok(self.push(d, k, out, Op::Gather(table, idx.to_vec())))
    }

    /// For `x: [d, n·m]` with columns grouped as `j·m + k` and `w: [m, 1]`,
    /// returns `[d, n]` where column `j` is `Σ_k w_k · x[:, j·m + k]`.
    pub fn group_weighted_sum(&mut self, x: Var, w: Var, groups: usize) -> Result<Var> {
        let [d, nm] = self.shape(x);
        let [m, wc] = self.shape(w);
        if wc != 1 || groups * m != nm {
            return Err(Error::Dimension {
                op: "group_weighted_sum",
                lhs: [d, nm],
                rhs: [m, wc],
            });
        }
        let (xs, ws) = (self.data(x), self.data(w));
        let mut out = vec![0.0; d * groups];
        for e in 0..d {
            for j in 0..groups {
                let mut acc = 0.0;
                for k in 0..m {
                    acc += ws[k] * xs[e * nm + j * m + k];
                }
                out[e * groups + j] = acc;
            }
        }
        Ok(self.push(d, groups, out, Op::GroupWeightedSum(x, w, groups)))
    }

    /// Clamp into `[lo, hi]`; gradient passes only where the input was inside.
    pub fn clamp(&mut self, a: Var, lo: f64, hi: f64) -> Var {
        self.map(Op::Clamp(a, lo, hi), a, |x| x.clamp(lo, hi))
    }

    pub fn clamp_min(&mut self, a: Var, lo: f64) -> Var {
        self.clamp(a, lo, f64::INFINITY)
    }

    /// Reset every accumulated gradient to zero.
    pub fn zero_grad(&mut self) {
        for n in &mut self.nodes {
            n.grad.iter_mut().for_each(|g| *g = 0.0);
        }
    }

    /// Propagate `d root / d node` into every node's `grad` (accumulating).
    pub fn backward(&mut self, root: Var) -> Result<()> {
        if self.shape(root) != [1, 1] {
            return Err(Error::Contract(format!(
                "backward needs a scalar root, got shape {:?}",
                self.shape(root)
            )));
        }
        let mut adj: Vec<Option<Vec<f64>>> = vec![None; root.0 + 1];
        adj[root.0] = Some(vec![1.0]);
        for i in (0..=root.0).rev() {
            let Some(g) = adj[i].take() else { continue };
            self.propagate(i, &g, &mut adj);
            for (dst, src) in self.nodes[i].grad.iter_mut().zip(&g) {
                *dst += src;
            }
        }
        Ok(())
    }

    fn propagate(&self, i: usize, g: &[f64], adj: &mut [Option<Vec<f64>>]) {
        let node = &self.nodes[i];
        let y = &node.data;
        let nodes = &self.nodes;
        macro_rules! slot {
            ($v:expr) => {
                slot(adj, nodes, $v)
            };
        }
        match &node.op {
            Op::Leaf | Op::Param(_) => {}
            Op::MatMul(a, b) => {
                let ([p, q], [_, r]) = (nodes[a.0].shape(), nodes[b.0].shape());
                let ga = slot!(a);
                gemm(p, r, q, g, false, &nodes[b.0].data, true, ga);
                let gb = slot!(b);
                gemm(q, p, r, &nodes[a.0].data, true, g, false, gb);
            }
            Op::Add(a, b) => {
                axpy(slot!(a), 1.0, g);
                axpy(slot!(b), 1.0, g);
            }
            Op::Sub(a, b) => {
                axpy(slot!(a), 1.0, g);
                axpy(slot!(b), -1.0, g);
            }
            Op::Mul(a, b) => {
                let (xa, xb) = (&nodes[a.0].data, &nodes[b.0].data);
                let ga = slot!(a);
                for ((d, &gi), &bi) in ga.iter_mut().zip(g).zip(xb) {
                    *d += gi * bi;
                }
                let gb = slot!(b);
                for ((d, &gi), &ai) in gb.iter_mut().zip(g).zip(xa) {
                    *d += gi * ai;
                }
            }
            Op::Div(a, b) => {
                let xb = &nodes[b.0].data;
                let ga = slot!(a);
                for ((d, &gi), &bi) in ga.iter_mut().zip(g).zip(xb) {
                    *d += gi / bi;
                }
                let gb = slot!(b);
                for (((d, &gi), &bi), &yi) in gb.iter_mut().zip(g).zip(xb).zip(y) {
                    *d -= gi * yi / bi;
                }
            }
            Op::ScalarMul(s, a) => {
                let k = nodes[s.0].data[0];
                let xa = &nodes[a.0].data;
                let ds: f64 = g.iter().zip(xa).map(|(gi, ai)| gi * ai).sum();
                slot!(s)[0] += ds;
                axpy(slot!(a), k, g);
            }
            Op::Scale(a, k) => axpy(slot!(a), *k, g),
            Op::AddConst(a) => axpy(slot!(a), 1.0, g),
            Op::Neg(a) => axpy(slot!(a), -1.0, g),
            Op::Tanh(a) => {
                for ((d, &gi), &yi) in slot!(a).iter_mut().zip(g).zip(y) {
                    *d += gi * (1.0 - yi * yi);
                }
            }
            Op::Sigmoid(a) => {
                for ((d, &gi), &yi) in slot!(a).iter_mut().zip(g).zip(y) {
                    *d += gi * yi * (1.0 - yi);
                }
            }
            Op::Log(a) => {
                let xa = &nodes[a.0].data;
                for ((d, &gi), &xi) in slot!(a).iter_mut().zip(g).zip(xa) {
                    *d += gi / xi;
                }
            }
            Op::Softmax(a) => {
                let dot: f64 = g.iter().zip(y).map(|(gi, yi)| gi * yi).sum();
                for ((d, &gi), &yi) in slot!(a).iter_mut().zip(g).zip(y) {
                    *d += yi * (gi - dot);
                }
            }
            Op::ReduceMax(a, idx) => slot!(a)[*idx] += g[0],
            Op::RowMax(a, idx) => {
                let c = nodes[a.0].cols;
                let ga = slot!(a);
                for (i, &j) in idx.iter().enumerate() {
                    ga[i * c + j] += g[i];
                }
            }
            Op::Sum(a) => {
                for d in slot!(a).iter_mut() {
                    *d += g[0];
                }
            }
            Op::Concat(parts, axis) => match axis {
                Axis::Rows => {
                    let mut off = 0;
                    for &p in parts {
                        let len = nodes[p.0].data.len();
                        axpy(slot!(p), 1.0, &g[off..off + len]);
                        off += len;
                    }
                }
                Axis::Cols => {
                    let total = node.cols;
                    let mut off = 0;
                    for &p in parts {
                        let c = nodes[p.0].cols;
                        let gp = slot!(p);
                        for r in 0..node.rows {
                            axpy(
                                &mut gp[r * c..(r + 1) * c],
                                1.0,
                                &g[r * total + off..r * total + off + c],
                            );
                        }
                        off += c;
                    }
                }
            },
            Op::SliceRows(a, start) => {
                let c = node.cols;
                let ga = slot!(a);
                axpy(&mut ga[start * c..start * c + g.len()], 1.0, g);
            }
            Op::SliceCols(a, start) => {
                let (c, len) = (nodes[a.0].cols, node.cols);
                let ga = slot!(a);
                for r in 0..node.rows {
                    axpy(
                        &mut ga[r * c + start..r * c + start + len],
                        1.0,
                        &g[r * len..(r + 1) * len],
                    );
                }
            }
            Op::Transpose(a) => {
                let (r, c) = (nodes[a.0].rows, nodes[a.0].cols);
                let ga = slot!(a);
                for i in 0..r {
                    for j in 0..c {
                        ga[i * c + j] += g[j * r + i];
                    }
                }
            }
            Op::Reshape(a) => axpy(slot!(a), 1.0, g),
            Op::RepeatCols(a) => {
                let n = node.cols;
                let ga = slot!(a);
                for (i, d) in ga.iter_mut().enumerate() {
                    *d += g[i * n..(i + 1) * n].iter().sum::<f64>();
                }
            }
            Op::Gather(t, idx) => {
                let d = nodes[t.0].cols;
                let k = idx.len();
                let gt = slot!(t);
                for (col, &row) in idx.iter().enumerate() {
                    for e in 0..d {
                        gt[row * d + e] += g[e * k + col];
                    }
                }
            }
            Op::GroupWeightedSum(x, w, groups) => {
                let (d, nm) = (nodes[x.0].rows, nodes[x.0].cols);
                let m = nm / groups;
                let (xs, ws) = (&nodes[x.0].data, &nodes[w.0].data);
                let gx = slot!(x);
                for e in 0..d {
                    for j in 0..*groups {
                        let gj = g[e * groups + j];
                        for k in 0..m {
                            gx[e * nm + j * m + k] += ws[k] * gj;
                        }
                    }
                }
                let gw = slot!(w);
                for e in 0..d {
                    for j in 0..*groups {
                        let gj = g[e * groups + j];
                        for k in 0..m {
                            gw[k] += gj * xs[e * nm + j * m + k];
                        }
                    }
                }
            }
            Op::Clamp(a, lo, hi) => {
                let xa = &nodes[a.0].data;
                for ((d, &gi), &xi) in slot!(a).iter_mut().zip(g).zip(xa) {
                    if xi >= *lo && xi <= *hi {
                        *d += gi;
                    }
                }
            }
        }
    }

    /// Text edge list: one line per node, `id op [rows x cols] <- parents`.
    pub fn dump_edges(&self) -> String {
        let mut s = String::new();
        for (i, n) in self.nodes.iter().enumerate() {
            let parents: Vec<String> = n.op.parents().iter().map(|p| p.0.to_string()).collect();
            let _ = writeln!(
                s,
                "{i} {} [{} x {}] <- {}",
                n.op.name(),
                n.rows,
                n.cols,
                parents.join(",")
            );
        }
        s
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn slot<'a>(adj: &'a mut [Option<Vec<f64>>], nodes: &[Node], v: impl std::borrow::Borrow<Var>) -> &'a mut Vec<f64> {
    let v = *v.borrow();
    adj[v.0].get_or_insert_with(|| vec![0.0; nodes[v.0].data.len()])
}

/// Index of the first maximal entry.
pub fn argmax_first(x: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in x.iter().enumerate().skip(1) {
        if v > x[best] {
            best = i;
        }
    }
    best
}

fn axpy(dst: &mut [f64], k: f64, src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += k * s;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matmul_identity_and_direct() {
        let mut t = Tape::new();
        let i2 = t.leaf(2, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let m = t.leaf(2, 2, vec![3.0, -1.0, 2.5, 7.0]).unwrap();
        let p = t.matmul(i2, m).unwrap();
        assert_eq!(t.data(p), t.data(m));

        let a = t.leaf(1, 2, vec![1.0, 2.0]).unwrap();
        let b = t.leaf(2, 1, vec![3.0, 4.0]).unwrap();
        let c = t.matmul(a, b).unwrap();
        assert_eq!(t.data(c), &[11.0]);
    }

    #[test]
    fn matmul_shape_error_names_both_shapes() {
        let mut t = Tape::new();
        let a = t.zeros(2, 3);
        let b = t.zeros(2, 3);
        match t.matmul(a, b) {
            Err(Error::Dimension { lhs, rhs, .. }) => {
                assert_eq!(lhs, [2, 3]);
                assert_eq!(rhs, [2, 3]);
            }
            other => panic!("expected dimension error, got {other:?}"),
        }
    }

    #[test]
    fn elementwise_basics() {
        let mut t = Tape::new();
        let z = t.column(vec![0.0]);
        let th = t.tanh(z);
        let sg = t.sigmoid(z);
        assert_eq!(t.data(th), &[0.0]);
        assert_eq!(t.data(sg), &[0.5]);
        let a = t.column(vec![2.0, 3.0]);
        let b = t.column(vec![4.0, 5.0]);
        let m = t.mul(a, b).unwrap();
        assert_eq!(t.data(m), &[8.0, 15.0]);
        let bad = t.column(vec![1.0, 0.0]);
        assert!(matches!(t.log(bad), Err(Error::Domain { .. })));
        let c = t.column(vec![1.0]);
        assert!(t.add(a, c).is_err());
    }

    #[test]
    fn softmax_cases() {
        let mut t = Tape::new();
        let z = t.column(vec![0.0, 0.0]);
        let s = t.softmax(z).unwrap();
        assert_eq!(t.data(s), &[0.5, 0.5]);
        let one = t.column(vec![-123.4]);
        let s1 = t.softmax(one).unwrap();
        assert_eq!(t.data(s1), &[1.0]);
        let empty = t.leaf(0, 1, vec![]).unwrap();
        assert!(t.softmax(empty).is_err());
    }

    #[test]
    fn reduce_max_routes_to_first_max() {
        let mut t = Tape::new();
        let one = t.column(vec![5.0]);
        let m1 = t.reduce_max(one).unwrap();
        assert_eq!(t.scalar(m1), 5.0);

        let v = t.column(vec![3.0, 8.0, 1.0]);
        let m = t.reduce_max(v).unwrap();
        assert_eq!(t.scalar(m), 8.0);
        t.backward(m).unwrap();
        assert_eq!(t.grad(v), &[0.0, 1.0, 0.0]);

        let mut t = Tape::new();
        let tie = t.column(vec![7.0, 7.0]);
        let m = t.reduce_max(tie).unwrap();
        t.backward(m).unwrap();
        assert_eq!(t.grad(tie), &[1.0, 0.0]);

        let empty = t.leaf(0, 1, vec![]).unwrap();
        assert!(t.reduce_max(empty).is_err());
    }

    #[test]
    fn concat_cases() {
        let mut t = Tape::new();
        let a = t.column(vec![1.0, 2.0]);
        let solo = t.concat(&[a], Axis::Rows).unwrap();
        assert_eq!(t.data(solo), t.data(a));
        let b = t.column(vec![3.0]);
        let ab = t.concat(&[a, b], Axis::Rows).unwrap();
        assert_eq!(t.data(ab), &[1.0, 2.0, 3.0]);
        let s = t.sum(ab);
        t.backward(s).unwrap();
        assert_eq!(t.grad(a), &[1.0, 1.0]);
        assert_eq!(t.grad(b), &[1.0]);
        assert!(t.concat(&[a, b], Axis::Cols).is_err());
    }

    #[test]
    fn backward_leaf_bilinear_and_contract() {
        let mut t = Tape::new();
        let x = t.constant_scalar(3.0);
        t.backward(x).unwrap();
        assert_eq!(t.grad(x), &[1.0]);

        let mut t = Tape::new();
        let x = t.column(vec![1.0, -2.0, 0.5]);
        let y = t.column(vec![4.0, 5.0, 6.0]);
        let xy = t.mul(x, y).unwrap();
        let s = t.sum(xy);
        t.backward(s).unwrap();
        assert_eq!(t.grad(x), t.data(y));
        // accumulation without zeroing
        t.backward(s).unwrap();
        assert_eq!(t.grad(x), &[8.0, 10.0, 12.0]);
        t.zero_grad();
        t.backward(s).unwrap();
        assert_eq!(t.grad(x), &[4.0, 5.0, 6.0]);

        assert!(matches!(t.backward(x), Err(Error::Contract(_))));
    }

    #[test]
    fn row_max_and_group_sum() {
        let mut t = Tape::new();
        let r = t.leaf(2, 3, vec![1.0, 5.0, 5.0, -1.0, -3.0, 0.0]).unwrap();
        let m = t.row_max(r).unwrap();
        assert_eq!(t.data(m), &[5.0, 0.0]);
        let s = t.sum(m);
        t.backward(s).unwrap();
        assert_eq!(t.grad(r), &[0.0, 1.0, 0.0, 0.0, 0.0, 1.0]);

        // d=1, n=2 groups of m=2
        let x = t.leaf(1, 4, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let w = t.column(vec![0.0, 1.0]);
        let y = t.group_weighted_sum(x, w, 2).unwrap();
        assert_eq!(t.data(y), &[2.0, 4.0]);
    }

    #[test]
    fn dump_lists_every_node() {
        let mut t = Tape::new();
        let a = t.column(vec![1.0]);
        let b = t.tanh(a);
        let _ = t.sum(b);
        let dump = t.dump_edges();
        assert_eq!(dump.lines().count(), 3);
        assert!(dump.contains("1 tanh [1 x 1] <- 0"));
    }
}
