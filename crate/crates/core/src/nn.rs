//! Minimal reverse-mode autodiff over dense row-major `f64` matrices, with a
//! parameter store and Adam.
//!
//! A [`Tape`] records one forward pass. Parameters live in a [`ParamStore`];
//! `Tape::backward` accumulates their gradients there. Inputs added with
//! [`Tape::input`] are constants and never receive gradients.

use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::math;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "matrix data length");
        Matrix { rows, cols, data }
    }

    pub fn row_vector(v: &[f64]) -> Self {
        Matrix::from_vec(1, v.len(), v.to_vec())
    }

    /// Uniform Glorot initialization.
    pub fn glorot<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Self {
        let a = math::sqrt(6.0 / (rows + cols) as f64);
        Matrix::from_vec(rows, cols, (0..rows * cols).map(|_| rng.gen_range(-a..a)).collect())
    }

    pub fn filled(rows: usize, cols: usize, v: f64) -> Self {
        Matrix::from_vec(rows, cols, vec![v; rows * cols])
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    fn add_assign(&mut self, other: &Matrix) {
        debug_assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }
}

/// `a · b`
fn matmul(a: &Matrix, b: &Matrix) -> Matrix {
    assert_eq!(a.cols, b.rows, "matmul shape");
    let mut out = Matrix::zeros(a.rows, b.cols);
    for i in 0..a.rows {
        let orow = &mut out.data[i * b.cols..(i + 1) * b.cols];
        for (k, &av) in a.row(i).iter().enumerate() {
            if av == 0.0 {
                continue;
            }
            for (o, bv) in orow.iter_mut().zip(b.row(k)) {
                *o += av * bv;
            }
        }
    }
    out
}

/// `a · bᵀ`
fn matmul_bt(a: &Matrix, b: &Matrix) -> Matrix {
    assert_eq!(a.cols, b.cols, "matmul_bt shape");
    let mut out = Matrix::zeros(a.rows, b.rows);
    for i in 0..a.rows {
        for j in 0..b.rows {
            out.data[i * b.rows + j] = a.row(i).iter().zip(b.row(j)).map(|(x, y)| x * y).sum();
        }
    }
    out
}

/// `aᵀ · b`
fn matmul_at(a: &Matrix, b: &Matrix) -> Matrix {
    assert_eq!(a.rows, b.rows, "matmul_at shape");
    let mut out = Matrix::zeros(a.cols, b.cols);
    for r in 0..a.rows {
        let brow = b.row(r);
        for (i, &av) in a.row(r).iter().enumerate() {
            if av == 0.0 {
                continue;
            }
            for (o, bv) in out.data[i * b.cols..(i + 1) * b.cols].iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
    out
}

pub type ParamId = usize;

/// Learning-rate group of a parameter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ParamGroup {
    Main,
    Side,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Param {
    pub name: String,
    pub group: ParamGroup,
    pub value: Matrix,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ParamStore {
    params: Vec<Param>,
    #[serde(skip)]
    grads: Vec<Matrix>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: &str, group: ParamGroup, value: Matrix) -> ParamId {
        self.grads.push(Matrix::zeros(value.rows, value.cols));
        self.params.push(Param {
            name: name.to_string(),
            group,
            value,
        });
        self.params.len() - 1
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn params(&self) -> &[Param] {
        &self.params
    }

    pub fn value(&self, id: ParamId) -> &Matrix {
        &self.params[id].value
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Matrix {
        &mut self.params[id].value
    }

    pub fn grad(&self, id: ParamId) -> &Matrix {
        &self.grads[id]
    }

    fn ensure_grads(&mut self) {
        if self.grads.len() != self.params.len() {
            self.grads = self.params.iter().map(|p| Matrix::zeros(p.value.rows, p.value.cols)).collect();
        }
    }

    pub fn zero_grad(&mut self) {
        self.ensure_grads();
        for g in &mut self.grads {
            g.data.iter_mut().for_each(|x| *x = 0.0);
        }
    }

    pub fn scale_grads(&mut self, s: f64) {
        for g in &mut self.grads {
            g.data.iter_mut().for_each(|x| *x *= s);
        }
    }

    /// Total number of scalar parameters.
    pub fn size(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    /// Copy every value from `other`, which must have identical layout.
    pub fn load_values(&mut self, other: &ParamStore) {
        assert_eq!(self.params.len(), other.params.len(), "parameter layout");
        for (a, b) in self.params.iter_mut().zip(&other.params) {
            assert_eq!((a.value.rows, a.value.cols), (b.value.rows, b.value.cols), "parameter {}", a.name);
            a.value.data.copy_from_slice(&b.value.data);
        }
    }
}

pub type NodeId = usize;

#[derive(Debug, Clone)]
enum Op {
    Input,
    Param(ParamId),
    Gather { param: ParamId, ids: Vec<u32> },
    MatMul(NodeId, NodeId),
    MatMulBt(NodeId, NodeId),
    Add(NodeId, NodeId),
    AddRow(NodeId, NodeId),
    Relu(NodeId),
    Scale(NodeId, f64),
    MulConst(NodeId, Matrix),
    SoftmaxRows(NodeId),
    Row(NodeId, usize),
    ConcatCols(NodeId, NodeId),
    LayerNorm { x: NodeId, gain: NodeId, bias: NodeId, xhat: Matrix, inv_std: Vec<f64> },
    BceLogits { logits: NodeId, labels: Vec<f64>, probs: Vec<f64> },
}

#[derive(Debug, Clone)]
struct Node {
    value: Matrix,
    op: Op,
}

/// Probability clamp used by the binary cross-entropy.
pub const PROB_EPS: f64 = 1e-7;

/// Mean over labels of `−[y ln p + (1−y) ln(1−p)]`, with `p` clamped to
/// `[ε, 1−ε]`.
pub fn bce(probs: &[f64], labels: &[f64]) -> f64 {
    assert_eq!(probs.len(), labels.len(), "bce length");
    if probs.is_empty() {
        return 0.0;
    }
    let total: f64 = probs
        .iter()
        .zip(labels)
        .map(|(&p, &y)| {
            let p = p.clamp(PROB_EPS, 1.0 - PROB_EPS);
            -(y * math::ln(p) + (1.0 - y) * math::ln(1.0 - p))
        })
        .sum();
    total / probs.len() as f64
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    fn push(&mut self, value: Matrix, op: Op) -> NodeId {
        self.nodes.push(Node { value, op });
        self.nodes.len() - 1
    }

    pub fn value(&self, id: NodeId) -> &Matrix {
        &self.nodes[id].value
    }

    pub fn input(&mut self, m: Matrix) -> NodeId {
        self.push(m, Op::Input)
    }

    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> NodeId {
        self.push(store.value(id).clone(), Op::Param(id))
    }

    /// Rows `ids` of an embedding-table parameter.
    pub fn gather(&mut self, store: &ParamStore, table: ParamId, ids: &[u32]) -> NodeId {
        let t = store.value(table);
        let mut out = Matrix::zeros(ids.len(), t.cols);
        for (r, &i) in ids.iter().enumerate() {
            out.row_mut(r).copy_from_slice(t.row(i as usize));
        }
        self.push(out, Op::Gather { param: table, ids: ids.to_vec() })
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = matmul(self.value(a), self.value(b));
        self.push(v, Op::MatMul(a, b))
    }

    pub fn matmul_bt(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = matmul_bt(self.value(a), self.value(b));
        self.push(v, Op::MatMulBt(a, b))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let mut v = self.value(a).clone();
        assert_eq!((v.rows, v.cols), (self.value(b).rows, self.value(b).cols), "add shape");
        v.add_assign(self.value(b));
        self.push(v, Op::Add(a, b))
    }

    /// Add a `1 × c` row to every row of `a`.
    pub fn add_row(&mut self, a: NodeId, bias: NodeId) -> NodeId {
        let mut v = self.value(a).clone();
        let b = self.value(bias);
        assert_eq!((b.rows, b.cols), (1, v.cols), "bias shape");
        for r in 0..v.rows {
            for (x, y) in v.row_mut(r).iter_mut().zip(&b.data) {
                *x += y;
            }
        }
        self.push(v, Op::AddRow(a, bias))
    }

    pub fn relu(&mut self, a: NodeId) -> NodeId {
        let mut v = self.value(a).clone();
        v.data.iter_mut().for_each(|x| *x = x.max(0.0));
        self.push(v, Op::Relu(a))
    }

    pub fn scale(&mut self, a: NodeId, s: f64) -> NodeId {
        let mut v = self.value(a).clone();
        v.data.iter_mut().for_each(|x| *x *= s);
        self.push(v, Op::Scale(a, s))
    }

    /// Element-wise product with a constant (e.g. a dropout mask).
    pub fn mul_const(&mut self, a: NodeId, c: Matrix) -> NodeId {
        let mut v = self.value(a).clone();
        assert_eq!(v.data.len(), c.data.len(), "mul_const shape");
        for (x, m) in v.data.iter_mut().zip(&c.data) {
            *x *= m;
        }
        self.push(v, Op::MulConst(a, c))
    }

    /// Inverted dropout with drop probability `p`.
    pub fn dropout<R: Rng + ?Sized>(&mut self, a: NodeId, p: f64, rng: &mut R) -> NodeId {
        let (rows, cols) = (self.value(a).rows, self.value(a).cols);
        let keep = 1.0 - p;
        let mask = Matrix::from_vec(
            rows,
            cols,
            (0..rows * cols).map(|_| if rng.gen::<f64>() < keep { 1.0 / keep } else { 0.0 }).collect(),
        );
        self.mul_const(a, mask)
    }

    pub fn softmax_rows(&mut self, a: NodeId) -> NodeId {
        let mut v = self.value(a).clone();
        for r in 0..v.rows {
            let row = v.row_mut(r);
            let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut s = 0.0;
            for x in row.iter_mut() {
                *x = math::exp(*x - m);
                s += *x;
            }
            row.iter_mut().for_each(|x| *x /= s);
        }
        self.push(v, Op::SoftmaxRows(a))
    }

    pub fn row(&mut self, a: NodeId, i: usize) -> NodeId {
        let v = Matrix::row_vector(self.value(a).row(i));
        self.push(v, Op::Row(a, i))
    }

    pub fn concat_cols(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let (x, y) = (self.value(a), self.value(b));
        assert_eq!(x.rows, y.rows, "concat rows");
        let mut out = Matrix::zeros(x.rows, x.cols + y.cols);
        for r in 0..x.rows {
            out.row_mut(r)[..x.cols].copy_from_slice(x.row(r));
            out.row_mut(r)[x.cols..].copy_from_slice(y.row(r));
        }
        self.push(out, Op::ConcatCols(a, b))
    }

    /// Row-wise layer normalization with `1 × c` gain and bias.
    pub fn layer_norm(&mut self, x: NodeId, gain: NodeId, bias: NodeId) -> NodeId {
        const EPS: f64 = 1e-5;
        let xv = self.value(x);
        let (rows, cols) = (xv.rows, xv.cols);
        let mut xhat = Matrix::zeros(rows, cols);
        let mut inv_std = Vec::with_capacity(rows);
        for r in 0..rows {
            let row = xv.row(r);
            let mean = row.iter().sum::<f64>() / cols as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / cols as f64;
            let is = 1.0 / math::sqrt(var + EPS);
            for (o, v) in xhat.row_mut(r).iter_mut().zip(row) {
                *o = (v - mean) * is;
            }
            inv_std.push(is);
        }
        let (g, b) = (self.value(gain), self.value(bias));
        let mut out = xhat.clone();
        for r in 0..rows {
            for (c, o) in out.row_mut(r).iter_mut().enumerate() {
                *o = *o * g.data[c] + b.data[c];
            }
        }
        self.push(out, Op::LayerNorm { x, gain, bias, xhat, inv_std })
    }

    /// Scalar binary cross-entropy of `sigmoid(logits)` against `labels`.
    pub fn bce_with_logits(&mut self, logits: NodeId, labels: &[f64]) -> NodeId {
        let probs: Vec<f64> = self.value(logits).data.iter().map(|z| math::sigmoid(*z)).collect();
        let loss = bce(&probs, labels);
        self.push(
            Matrix::from_vec(1, 1, vec![loss]),
            Op::BceLogits {
                logits,
                labels: labels.to_vec(),
                probs,
            },
        )
    }

    /// Backpropagate from a scalar node, accumulating parameter gradients.
    pub fn backward(&self, root: NodeId, store: &mut ParamStore) {
        store.ensure_grads();
        let mut grads: Vec<Option<Matrix>> = vec![None; self.nodes.len()];
        grads[root] = Some(Matrix::filled(1, 1, 1.0));
        fn acc(grads: &mut [Option<Matrix>], id: NodeId, g: Matrix) {
            match &mut grads[id] {
                Some(existing) => existing.add_assign(&g),
                slot => *slot = Some(g),
            }
        }
        for id in (0..=root).rev() {
            let Some(g) = grads[id].take() else { continue };
            let node = &self.nodes[id];
            match &node.op {
                Op::Input => {}
                Op::Param(p) => store.grads[*p].add_assign(&g),
                Op::Gather { param, ids } => {
                    let pg = &mut store.grads[*param];
                    for (r, &i) in ids.iter().enumerate() {
                        for (a, b) in pg.row_mut(i as usize).iter_mut().zip(g.row(r)) {
                            *a += b;
                        }
                    }
                }
                Op::MatMul(a, b) => {
                    let ga = matmul_bt(&g, self.value(*b));
                    let gb = matmul_at(self.value(*a), &g);
                    acc(&mut grads, *a, ga);
                    acc(&mut grads, *b, gb);
                }
                Op::MatMulBt(a, b) => {
                    // out = a bᵀ: da = g b, db = gᵀ a
                    let ga = matmul(&g, self.value(*b));
                    let gb = matmul_at(&g, self.value(*a));
                    acc(&mut grads, *a, ga);
                    acc(&mut grads, *b, gb);
                }
                Op::Add(a, b) => {
                    acc(&mut grads, *a, g.clone());
                    acc(&mut grads, *b, g);
                }
                Op::AddRow(a, bias) => {
                    let mut gb = Matrix::zeros(1, g.cols);
                    for r in 0..g.rows {
                        for (x, y) in gb.data.iter_mut().zip(g.row(r)) {
                            *x += y;
                        }
                    }
                    acc(&mut grads, *a, g);
                    acc(&mut grads, *bias, gb);
                }
                Op::Relu(a) => {
                    let mut ga = g;
                    for (x, v) in ga.data.iter_mut().zip(&node.value.data) {
                        if *v <= 0.0 {
                            *x = 0.0;
                        }
                    }
                    acc(&mut grads, *a, ga);
                }
                Op::Scale(a, s) => {
                    let mut ga = g;
                    ga.data.iter_mut().for_each(|x| *x *= s);
                    acc(&mut grads, *a, ga);
                }
                Op::MulConst(a, c) => {
                    let mut ga = g;
                    for (x, m) in ga.data.iter_mut().zip(&c.data) {
                        *x *= m;
                    }
                    acc(&mut grads, *a, ga);
                }
                Op::SoftmaxRows(a) => {
                    let y = &node.value;
                    let mut ga = Matrix::zeros(y.rows, y.cols);
                    for r in 0..y.rows {
                        let dot: f64 = g.row(r).iter().zip(y.row(r)).map(|(a, b)| a * b).sum();
                        for ((o, gy), yy) in ga.row_mut(r).iter_mut().zip(g.row(r)).zip(y.row(r)) {
                            *o = yy * (gy - dot);
                        }
                    }
                    acc(&mut grads, *a, ga);
                }
                Op::Row(a, i) => {
                    let src = self.value(*a);
                    let mut ga = Matrix::zeros(src.rows, src.cols);
                    ga.row_mut(*i).copy_from_slice(&g.data);
                    acc(&mut grads, *a, ga);
                }
                Op::ConcatCols(a, b) => {
                    let ca = self.value(*a).cols;
                    let cb = self.value(*b).cols;
                    let mut ga = Matrix::zeros(g.rows, ca);
                    let mut gb = Matrix::zeros(g.rows, cb);
                    for r in 0..g.rows {
                        ga.row_mut(r).copy_from_slice(&g.row(r)[..ca]);
                        gb.row_mut(r).copy_from_slice(&g.row(r)[ca..]);
                    }
                    acc(&mut grads, *a, ga);
                    acc(&mut grads, *b, gb);
                }
                Op::LayerNorm { x, gain, bias, xhat, inv_std } => {
                    let gv = self.value(*gain);
                    let (rows, cols) = (xhat.rows, xhat.cols);
                    let mut gx = Matrix::zeros(rows, cols);
                    let mut gg = Matrix::zeros(1, cols);
                    let mut gbias = Matrix::zeros(1, cols);
                    for r in 0..rows {
                        let dy = g.row(r);
                        let xh = xhat.row(r);
                        let mut dxhat = vec![0.0; cols];
                        for c in 0..cols {
                            dxhat[c] = dy[c] * gv.data[c];
                            gg.data[c] += dy[c] * xh[c];
                            gbias.data[c] += dy[c];
                        }
                        let s1: f64 = dxhat.iter().sum();
                        let s2: f64 = dxhat.iter().zip(xh).map(|(a, b)| a * b).sum();
                        let n = cols as f64;
                        for (c, o) in gx.row_mut(r).iter_mut().enumerate() {
                            *o = inv_std[r] / n * (n * dxhat[c] - s1 - xh[c] * s2);
                        }
                    }
                    acc(&mut grads, *x, gx);
                    acc(&mut grads, *gain, gg);
                    acc(&mut grads, *bias, gbias);
                }
                Op::BceLogits { logits, labels, probs } => {
                    let k = probs.len() as f64;
                    let scale = g.data[0] / k;
                    let gz: Vec<f64> = probs
                        .iter()
                        .zip(labels)
                        .map(|(&p, &y)| {
                            if (PROB_EPS..=1.0 - PROB_EPS).contains(&p) {
                                (p - y) * scale
                            } else {
                                0.0
                            }
                        })
                        .collect();
                    let shape = self.value(*logits);
                    acc(&mut grads, *logits, Matrix::from_vec(shape.rows, shape.cols, gz));
                }
            }
        }
    }
}

/// Adam with per-group learning rates.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    m: Vec<Matrix>,
    v: Vec<Matrix>,
}

impl Adam {
    pub fn new(store: &ParamStore) -> Self {
        let zeros = || store.params().iter().map(|p| Matrix::zeros(p.value.rows, p.value.cols)).collect::<Vec<_>>();
        Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: zeros(),
            v: zeros(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// One update using the store's accumulated gradients.
    pub fn step(&mut self, store: &mut ParamStore, lr_main: f64, lr_side: f64) {
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - libm::pow(self.beta1, f64::from(t));
        let bc2 = 1.0 - libm::pow(self.beta2, f64::from(t));
        for (i, p) in store.params.iter_mut().enumerate() {
            let lr = match p.group {
                ParamGroup::Main => lr_main,
                ParamGroup::Side => lr_side,
            };
            let g = &store.grads[i];
            let (m, v) = (&mut self.m[i], &mut self.v[i]);
            for j in 0..p.value.data.len() {
                let gj = g.data[j];
                m.data[j] = self.beta1 * m.data[j] + (1.0 - self.beta1) * gj;
                v.data[j] = self.beta2 * v.data[j] + (1.0 - self.beta2) * gj * gj;
                let mh = m.data[j] / bc1;
                let vh = v.data[j] / bc2;
                p.value.data[j] -= lr * mh / (math::sqrt(vh) + self.eps);
            }
        }
    }
}
