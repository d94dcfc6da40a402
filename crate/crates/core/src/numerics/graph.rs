//! Tape-based reverse-mode differentiation over dense matrices.
//!
//! A [`Graph`] records every operation applied to its [`Var`]s. Values are
//! computed eagerly; [`Graph::backward`] walks the tape in reverse and
//! returns the gradient of a scalar output with respect to every parameter
//! that took part in the computation.
//!
//! ```
//! use wlcoref::numerics::{Graph, ParamStore, Tensor};
//!
//! let mut store = ParamStore::new();
//! let w = store.add("w", Tensor::matrix(2, 1, vec![1.0, 1.0]));
//! let mut g = Graph::new();
//! let x = g.constant(Tensor::matrix(1, 2, vec![1.0, 2.0]));
//! let wv = g.param(&store, w);
//! let y = g.matmul(x, wv);
//! let loss = g.sum(y);
//! assert_eq!(g.value(loss).item(), 3.0);
//! let grads = g.backward(loss);
//! assert_eq!(grads.get(w).unwrap().data(), &[1.0, 2.0]);
//! ```

use std::collections::BTreeMap;
use std::collections::HashMap;
use std::ops::Range;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::tensor::{ParamId, ParamStore, Tensor};
use crate::error::{Error, Result};

/// Handle to a node on a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

/// How a per-pair loss is reduced to a scalar.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Reduction {
    #[default]
    Mean,
    Sum,
}

enum Op {
    Leaf,
    Param(ParamId),
    MatMul(Var, Var),
    Transpose(Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Relu(Var),
    Sigmoid(Var),
    ConcatCols(Vec<Var>),
    GatherRows(Var, Vec<usize>),
    GatherElems(Var, Vec<(usize, usize)>),
    RepeatRows(Var),
    SoftmaxRows(Var),
    Conv1dK3 {
        x: Var,
        kernel: Var,
        bias: Var,
        segments: Vec<Range<usize>>,
    },
    Dropout(Var, Vec<f64>),
    Sum(Var),
    Nlml {
        scores: Var,
        groups: Vec<Range<usize>>,
        gold: Vec<bool>,
    },
    BceLogits {
        scores: Var,
        targets: Vec<f64>,
        reduction: Reduction,
    },
    SegmentXent {
        logits: Var,
        segments: Vec<Range<usize>>,
        targets: Vec<Vec<usize>>,
    },
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "constant",
            Op::Param(_) => "param",
            Op::MatMul(..) => "matmul",
            Op::Transpose(_) => "transpose",
            Op::Add(..) => "add",
            Op::AddRow(..) => "add_row",
            Op::Mul(..) => "mul",
            Op::Scale(..) => "scale",
            Op::Relu(_) => "relu",
            Op::Sigmoid(_) => "sigmoid",
            Op::ConcatCols(_) => "concat_cols",
            Op::GatherRows(..) => "gather_rows",
            Op::GatherElems(..) => "gather_elems",
            Op::RepeatRows(_) => "repeat_rows",
            Op::SoftmaxRows(_) => "softmax_rows",
            Op::Conv1dK3 { .. } => "conv1d_k3",
            Op::Dropout(..) => "dropout",
            Op::Sum(_) => "sum",
            Op::Nlml { .. } => "nlml",
            Op::BceLogits { .. } => "bce_logits",
            Op::SegmentXent { .. } => "segment_xent",
        }
    }
}

struct Node {
    value: Tensor,
    op: Op,
}

/// Gradients of a scalar with respect to parameters.
#[derive(Debug, Default)]
pub struct Gradients {
    grads: BTreeMap<ParamId, Tensor>,
}

impl Gradients {
    pub fn get(&self, id: ParamId) -> Option<&Tensor> {
        self.grads.get(&id)
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Tensor)> {
        self.grads.iter().map(|(k, v)| (*k, v))
    }
}

pub struct Graph {
    nodes: Vec<Node>,
    param_leaves: HashMap<ParamId, Var>,
    training: bool,
    rng: ChaCha8Rng,
    non_finite: Option<String>,
}

impl Default for Graph {
    fn default() -> Self {
        Self::new()
    }
}

impl Graph {
    /// An evaluation-mode graph (dropout disabled).
    pub fn new() -> Self {
        Graph {
            nodes: Vec::new(),
            param_leaves: HashMap::new(),
            training: false,
            rng: ChaCha8Rng::seed_from_u64(0),
            non_finite: None,
        }
    }

    /// A training-mode graph; `seed` drives dropout masks.
    pub fn training(seed: u64) -> Self {
        Graph {
            training: true,
            rng: ChaCha8Rng::seed_from_u64(seed),
            ..Self::new()
        }
    }

    /// Switches to training mode with a fresh dropout stream.
    pub fn set_training(&mut self, seed: u64) {
        self.training = true;
        self.rng = ChaCha8Rng::seed_from_u64(seed);
    }

    pub fn is_training(&self) -> bool {
        self.training
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    /// Fails if any recorded operation produced NaN or infinity.
    pub fn check_finite(&self) -> Result<()> {
        match &self.non_finite {
            Some(op) => Err(Error::NonFinite { op: op.clone() }),
            None => Ok(()),
        }
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        if self.non_finite.is_none() && !value.is_finite() {
            self.non_finite = Some(format!("{} (node {})", op.name(), self.nodes.len()));
        }
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf)
    }

    /// Leaf bound to a stored parameter. Repeated calls for the same
    /// parameter return the same node.
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        if let Some(&v) = self.param_leaves.get(&id) {
            return v;
        }
        let v = self.push(store.value(id).clone(), Op::Param(id));
        self.param_leaves.insert(id, v);
        v
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let (m, k) = self.value(a).dims2();
        let (k2, n) = self.value(b).dims2();
        assert_eq!(k, k2, "matmul inner dims {m}x{k} · {k2}x{n}");
        let mut out = vec![0.0; m * n];
        gemm(
            m,
            k,
            n,
            self.value(a).data(),
            (k, 1),
            self.value(b).data(),
            (n, 1),
            &mut out,
        );
        self.push(Tensor::matrix(m, n, out), Op::MatMul(a, b))
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let t = self.value(a).transpose();
        self.push(t, Op::Transpose(a))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let (va, vb) = (self.value(a), self.value(b));
        assert_eq!(va.len(), vb.len(), "add: {:?} vs {:?}", va.shape(), vb.shape());
        let mut out = va.clone();
        out.add_assign(vb);
        self.push(out, Op::Add(a, b))
    }

    /// `x + b` with `b` broadcast over the rows of `x`.
    pub fn add_row(&mut self, x: Var, b: Var) -> Var {
        let vb = self.value(b).data().to_vec();
        let mut out = self.value(x).clone();
        let cols = out.cols();
        assert_eq!(cols, vb.len(), "add_row: {} cols vs bias {}", cols, vb.len());
        let (rows, cols) = out.dims2();
        let out = {
            let d = out.data_mut();
            for r in 0..rows {
                for (v, bb) in d[r * cols..(r + 1) * cols].iter_mut().zip(&vb) {
                    *v += bb;
                }
            }
            out
        };
        self.push(out, Op::AddRow(x, b))
    }

    /// `x · W + b`.
    pub fn affine(&mut self, x: Var, w: Var, b: Var) -> Var {
        let y = self.matmul(x, w);
        self.add_row(y, b)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let (va, vb) = (self.value(a), self.value(b));
        assert_eq!(va.len(), vb.len(), "mul: {:?} vs {:?}", va.shape(), vb.shape());
        let mut out = va.clone();
        for (x, y) in out.data_mut().iter_mut().zip(vb.data()) {
            *x *= y;
        }
        self.push(out, Op::Mul(a, b))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let mut out = self.value(a).clone();
        out.scale_in_place(s);
        self.push(out, Op::Scale(a, s))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let mut out = self.value(a).clone();
        out.data_mut().iter_mut().for_each(|v| *v = v.max(0.0));
        self.push(out, Op::Relu(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let mut out = self.value(a).clone();
        out.data_mut().iter_mut().for_each(|v| *v = sigmoid(*v));
        self.push(out, Op::Sigmoid(a))
    }

    /// Horizontal concatenation of matrices with equal row counts.
    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty());
        let rows = self.value(parts[0]).rows();
        let widths: Vec<usize> = parts
            .iter()
            .map(|&p| {
                assert_eq!(self.value(p).rows(), rows, "concat_cols row mismatch");
                self.value(p).cols()
            })
            .collect();
        let total: usize = widths.iter().sum();
        let mut out = vec![0.0; rows * total];
        let mut offset = 0;
        for (&p, &w) in parts.iter().zip(&widths) {
            let src = self.value(p).data();
            for r in 0..rows {
                out[r * total + offset..r * total + offset + w]
                    .copy_from_slice(&src[r * w..(r + 1) * w]);
            }
            offset += w;
        }
        self.push(Tensor::matrix(rows, total, out), Op::ConcatCols(parts.to_vec()))
    }

    /// Row selection; doubles as embedding lookup.
    pub fn gather_rows(&mut self, x: Var, indices: &[usize]) -> Var {
        let src = self.value(x);
        let (rows, cols) = src.dims2();
        let mut out = Vec::with_capacity(indices.len() * cols);
        for &i in indices {
            assert!(i < rows, "gather_rows index {i} out of {rows}");
            out.extend_from_slice(src.row(i));
        }
        self.push(
            Tensor::matrix(indices.len(), cols, out),
            Op::GatherRows(x, indices.to_vec()),
        )
    }

    /// Picks individual entries into a column vector.
    pub fn gather_elems(&mut self, x: Var, positions: &[(usize, usize)]) -> Var {
        let src = self.value(x);
        let out: Vec<f64> = positions.iter().map(|&(r, c)| src.get(r, c)).collect();
        self.push(
            Tensor::matrix(positions.len(), 1, out),
            Op::GatherElems(x, positions.to_vec()),
        )
    }

    /// Stacks a single row `n` times.
    pub fn repeat_rows(&mut self, x: Var, n: usize) -> Var {
        let src = self.value(x);
        assert_eq!(src.rows(), 1, "repeat_rows expects one row");
        let cols = src.cols();
        let mut out = Vec::with_capacity(n * cols);
        for _ in 0..n {
            out.extend_from_slice(src.data());
        }
        self.push(Tensor::matrix(n, cols, out), Op::RepeatRows(x))
    }

    /// Row-wise softmax restricted to entries where `mask` is true.
    /// Masked entries are exactly zero; a fully masked row is all zeros.
    pub fn softmax_rows(&mut self, x: Var, mask: Option<&[bool]>) -> Var {
        let src = self.value(x);
        let (rows, cols) = src.dims2();
        if let Some(m) = mask {
            assert_eq!(m.len(), rows * cols, "softmax mask size");
        }
        let mut out = vec![0.0; rows * cols];
        for r in 0..rows {
            let row = src.row(r);
            let keep = |c: usize| mask.is_none_or(|m| m[r * cols + c]);
            let max = (0..cols)
                .filter(|&c| keep(c))
                .map(|c| row[c])
                .fold(f64::NEG_INFINITY, f64::max);
            if max == f64::NEG_INFINITY {
                continue;
            }
            let mut total = 0.0;
            for c in (0..cols).filter(|&c| keep(c)) {
                let e = (row[c] - max).exp();
                out[r * cols + c] = e;
                total += e;
            }
            for v in &mut out[r * cols..(r + 1) * cols] {
                *v /= total;
            }
        }
        self.push(Tensor::matrix(rows, cols, out), Op::SoftmaxRows(x))
    }

    /// Width-3 convolution along the rows of `x` (`R × h`), applied
    /// independently inside each segment with one row of zero padding at
    /// both ends. `kernel` is `3 × h × c` (taps for offsets −1, 0, +1);
    /// `bias` has `c` entries. Output is `R × c`.
    pub fn conv1d_k3(
        &mut self,
        x: Var,
        kernel: Var,
        bias: Var,
        segments: &[Range<usize>],
    ) -> Var {
        let (rows, h) = self.value(x).dims2();
        let k = self.value(kernel);
        assert_eq!(k.len() % (3 * h), 0, "conv kernel must be 3 x {h} x c");
        let c = k.len() / (3 * h);
        assert_eq!(self.value(bias).len(), c, "conv bias width");
        let mut out = vec![0.0; rows * c];
        let bias_v = self.value(bias).data();
        for r in 0..rows {
            out[r * c..(r + 1) * c].copy_from_slice(bias_v);
        }
        let xv = self.value(x).data();
        let kv = k.data();
        for seg in segments {
            assert!(seg.end <= rows, "segment beyond input");
            for (tap, off) in [(0usize, -1isize), (1, 0), (2, 1)] {
                let Some((dst, src)) = tap_rows(seg, off) else {
                    continue;
                };
                let n = dst.len();
                gemm_acc(
                    n,
                    h,
                    c,
                    &xv[src.start * h..],
                    (h, 1),
                    &kv[tap * h * c..],
                    (c, 1),
                    &mut out[dst.start * c..],
                    1.0,
                );
            }
        }
        self.push(
            Tensor::matrix(rows, c, out),
            Op::Conv1dK3 {
                x,
                kernel,
                bias,
                segments: segments.to_vec(),
            },
        )
    }

    /// Inverted dropout; identity in evaluation mode or when `rate == 0`.
    pub fn dropout(&mut self, x: Var, rate: f64) -> Var {
        if !self.training || rate <= 0.0 {
            return x;
        }
        assert!(rate < 1.0, "dropout rate must be < 1");
        let keep = 1.0 / (1.0 - rate);
        let n = self.value(x).len();
        let mask: Vec<f64> = (0..n)
            .map(|_| if self.rng.gen::<f64>() < rate { 0.0 } else { keep })
            .collect();
        let mut out = self.value(x).clone();
        for (v, m) in out.data_mut().iter_mut().zip(&mask) {
            *v *= m;
        }
        self.push(out, Op::Dropout(x, mask))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).sum();
        self.push(Tensor::scalar(s), Op::Sum(x))
    }

    /// Negative log marginal likelihood over antecedent candidates.
    ///
    /// `scores` is a column of candidate scores; `groups[i]` is the range of
    /// rows holding token `i`'s candidates. Every token also has a dummy
    /// candidate with fixed score 0. `gold[p]` marks gold-coreferent
    /// candidates; a token with no gold candidate takes the dummy as gold.
    pub fn nlml(&mut self, scores: Var, groups: &[Range<usize>], gold: &[bool]) -> Var {
        let s = self.value(scores).data();
        assert_eq!(s.len(), gold.len(), "nlml gold mask size");
        let mut loss = 0.0;
        for g in groups {
            let all = logsumexp_with_dummy(&s[g.clone()]);
            let gold_lse = gold_logsumexp(&s[g.clone()], &gold[g.clone()]);
            loss += all - gold_lse;
        }
        self.push(
            Tensor::scalar(loss),
            Op::Nlml {
                scores,
                groups: groups.to_vec(),
                gold: gold.to_vec(),
            },
        )
    }

    /// Binary cross-entropy of `sigmoid(scores)` against 0/1 targets.
    pub fn bce_logits(&mut self, scores: Var, targets: &[f64], reduction: Reduction) -> Var {
        let s = self.value(scores).data();
        assert_eq!(s.len(), targets.len(), "bce target size");
        let total: f64 = s
            .iter()
            .zip(targets)
            .map(|(&x, &y)| x.max(0.0) - x * y + (-x.abs()).exp().ln_1p())
            .sum();
        let loss = match reduction {
            Reduction::Sum => total,
            Reduction::Mean if s.is_empty() => 0.0,
            Reduction::Mean => total / s.len() as f64,
        };
        self.push(
            Tensor::scalar(loss),
            Op::BceLogits {
                scores,
                targets: targets.to_vec(),
                reduction,
            },
        )
    }

    /// Softmax cross-entropy per segment and column: for segment `s` and
    /// column `c`, the class distribution runs over the segment's rows and
    /// the target row is `segments[s].start + targets[s][c]`. Summed.
    pub fn segment_xent(
        &mut self,
        logits: Var,
        segments: &[Range<usize>],
        targets: &[Vec<usize>],
    ) -> Var {
        let v = self.value(logits);
        let cols = v.cols();
        assert_eq!(segments.len(), targets.len());
        let mut loss = 0.0;
        for (seg, tgt) in segments.iter().zip(targets) {
            assert_eq!(tgt.len(), cols, "one target per column");
            for (c, &t) in tgt.iter().enumerate() {
                assert!(t < seg.len(), "target outside segment");
                let col: Vec<f64> = seg.clone().map(|r| v.get(r, c)).collect();
                loss += logsumexp(&col) - col[t];
            }
        }
        self.push(
            Tensor::scalar(loss),
            Op::SegmentXent {
                logits,
                segments: segments.to_vec(),
                targets: targets.to_vec(),
            },
        )
    }

    /// Gradients of the scalar `output` with respect to every parameter
    /// leaf on the tape.
    pub fn backward(&self, output: Var) -> Gradients {
        assert_eq!(self.value(output).len(), 1, "backward from non-scalar");
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[output.0] = Some(Tensor::filled(self.value(output).shape(), 1.0));
        let mut result = Gradients::default();

        for idx in (0..=output.0).rev() {
            let Some(gy) = grads[idx].take() else {
                continue;
            };
            let node = &self.nodes[idx];
            match &node.op {
                Op::Leaf => {}
                Op::Param(id) => {
                    result
                        .grads
                        .entry(*id)
                        .and_modify(|g| g.add_assign(&gy))
                        .or_insert(gy);
                }
                Op::MatMul(a, b) => {
                    let (m, k) = self.value(*a).dims2();
                    let n = self.value(*b).cols();
                    let mut da = vec![0.0; m * k];
                    gemm(m, n, k, gy.data(), (n, 1), self.value(*b).data(), (1, n), &mut da);
                    let mut db = vec![0.0; k * n];
                    gemm(k, m, n, self.value(*a).data(), (1, k), gy.data(), (n, 1), &mut db);
                    accumulate(&mut grads, *a, self.value(*a), da);
                    accumulate(&mut grads, *b, self.value(*b), db);
                }
                Op::Transpose(a) => {
                    let d = gy.transpose().into_data();
                    accumulate(&mut grads, *a, self.value(*a), d);
                }
                Op::Add(a, b) => {
                    accumulate(&mut grads, *a, self.value(*a), gy.data().to_vec());
                    accumulate(&mut grads, *b, self.value(*b), gy.into_data());
                }
                Op::AddRow(x, b) => {
                    let cols = gy.cols();
                    let mut db = vec![0.0; cols];
                    for r in 0..gy.rows() {
                        for (acc, v) in db.iter_mut().zip(gy.row(r)) {
                            *acc += v;
                        }
                    }
                    accumulate(&mut grads, *b, self.value(*b), db);
                    accumulate(&mut grads, *x, self.value(*x), gy.into_data());
                }
                Op::Mul(a, b) => {
                    let va = self.value(*a).data();
                    let vb = self.value(*b).data();
                    let da = gy.data().iter().zip(vb).map(|(g, y)| g * y).collect();
                    let db = gy.data().iter().zip(va).map(|(g, x)| g * x).collect();
                    accumulate(&mut grads, *a, self.value(*a), da);
                    accumulate(&mut grads, *b, self.value(*b), db);
                }
                Op::Scale(a, s) => {
                    let d = gy.data().iter().map(|g| g * s).collect();
                    accumulate(&mut grads, *a, self.value(*a), d);
                }
                Op::Relu(a) => {
                    let x = self.value(*a).data();
                    let d = gy
                        .data()
                        .iter()
                        .zip(x)
                        .map(|(g, &v)| if v > 0.0 { *g } else { 0.0 })
                        .collect();
                    accumulate(&mut grads, *a, self.value(*a), d);
                }
                Op::Sigmoid(a) => {
                    let y = node.value.data();
                    let d = gy
                        .data()
                        .iter()
                        .zip(y)
                        .map(|(g, &s)| g * s * (1.0 - s))
                        .collect();
                    accumulate(&mut grads, *a, self.value(*a), d);
                }
                Op::ConcatCols(parts) => {
                    let rows = gy.rows();
                    let total = gy.cols();
                    let mut offset = 0;
                    for &p in parts {
                        let w = self.value(p).cols();
                        let mut d = Vec::with_capacity(rows * w);
                        for r in 0..rows {
                            d.extend_from_slice(&gy.data()[r * total + offset..r * total + offset + w]);
                        }
                        accumulate(&mut grads, p, self.value(p), d);
                        offset += w;
                    }
                }
                Op::GatherRows(x, indices) => {
                    let (rows, cols) = self.value(*x).dims2();
                    let mut d = vec![0.0; rows * cols];
                    for (k, &i) in indices.iter().enumerate() {
                        for (acc, v) in d[i * cols..(i + 1) * cols].iter_mut().zip(gy.row(k)) {
                            *acc += v;
                        }
                    }
                    accumulate(&mut grads, *x, self.value(*x), d);
                }
                Op::GatherElems(x, positions) => {
                    let (rows, cols) = self.value(*x).dims2();
                    let mut d = vec![0.0; rows * cols];
                    for (k, &(r, c)) in positions.iter().enumerate() {
                        d[r * cols + c] += gy.data()[k];
                    }
                    accumulate(&mut grads, *x, self.value(*x), d);
                }
                Op::RepeatRows(x) => {
                    let cols = gy.cols();
                    let mut d = vec![0.0; cols];
                    for r in 0..gy.rows() {
                        for (acc, v) in d.iter_mut().zip(gy.row(r)) {
                            *acc += v;
                        }
                    }
                    accumulate(&mut grads, *x, self.value(*x), d);
                }
                Op::SoftmaxRows(x) => {
                    let y = &node.value;
                    let (rows, cols) = y.dims2();
                    let mut d = vec![0.0; rows * cols];
                    for r in 0..rows {
                        let yr = y.row(r);
                        let gr = gy.row(r);
                        let dot: f64 = yr.iter().zip(gr).map(|(a, b)| a * b).sum();
                        for c in 0..cols {
                            d[r * cols + c] = yr[c] * (gr[c] - dot);
                        }
                    }
                    accumulate(&mut grads, *x, self.value(*x), d);
                }
                Op::Conv1dK3 {
                    x,
                    kernel,
                    bias,
                    segments,
                } => {
                    let (rows, h) = self.value(*x).dims2();
                    let c = gy.cols();
                    let xv = self.value(*x).data();
                    let kv = self.value(*kernel).data();
                    let mut dx = vec![0.0; rows * h];
                    let mut dk = vec![0.0; 3 * h * c];
                    let mut db = vec![0.0; c];
                    for r in 0..rows {
                        for (acc, v) in db.iter_mut().zip(gy.row(r)) {
                            *acc += v;
                        }
                    }
                    for seg in segments {
                        for (tap, off) in [(0usize, -1isize), (1, 0), (2, 1)] {
                            let Some((dst, src)) = tap_rows(seg, off) else {
                                continue;
                            };
                            let n = dst.len();
                            // dx[src] += gy[dst] · K_tapᵀ
                            gemm_acc(
                                n,
                                c,
                                h,
                                &gy.data()[dst.start * c..],
                                (c, 1),
                                &kv[tap * h * c..],
                                (1, c),
                                &mut dx[src.start * h..],
                                1.0,
                            );
                            // dK_tap += x[src]ᵀ · gy[dst]
                            gemm_acc(
                                h,
                                n,
                                c,
                                &xv[src.start * h..],
                                (1, h),
                                &gy.data()[dst.start * c..],
                                (c, 1),
                                &mut dk[tap * h * c..(tap + 1) * h * c],
                                1.0,
                            );
                        }
                    }
                    accumulate(&mut grads, *x, self.value(*x), dx);
                    accumulate(&mut grads, *kernel, self.value(*kernel), dk);
                    accumulate(&mut grads, *bias, self.value(*bias), db);
                }
                Op::Dropout(x, mask) => {
                    let d = gy.data().iter().zip(mask).map(|(g, m)| g * m).collect();
                    accumulate(&mut grads, *x, self.value(*x), d);
                }
                Op::Sum(x) => {
                    let g = gy.item();
                    let d = vec![g; self.value(*x).len()];
                    accumulate(&mut grads, *x, self.value(*x), d);
                }
                Op::Nlml {
                    scores,
                    groups,
                    gold,
                } => {
                    let g = gy.item();
                    let s = self.value(*scores).data();
                    let mut d = vec![0.0; s.len()];
                    for grp in groups {
                        let all = logsumexp_with_dummy(&s[grp.clone()]);
                        let any_gold = gold[grp.clone()].iter().any(|&b| b);
                        let gold_lse = gold_logsumexp(&s[grp.clone()], &gold[grp.clone()]);
                        for p in grp.clone() {
                            let mut v = (s[p] - all).exp();
                            if any_gold && gold[p] {
                                v -= (s[p] - gold_lse).exp();
                            }
                            d[p] = g * v;
                        }
                    }
                    accumulate(&mut grads, *scores, self.value(*scores), d);
                }
                Op::BceLogits {
                    scores,
                    targets,
                    reduction,
                } => {
                    let s = self.value(*scores).data();
                    let norm = match reduction {
                        Reduction::Sum => 1.0,
                        Reduction::Mean => 1.0 / (s.len().max(1)) as f64,
                    };
                    let g = gy.item() * norm;
                    let d = s
                        .iter()
                        .zip(targets)
                        .map(|(&x, &y)| g * (sigmoid(x) - y))
                        .collect();
                    accumulate(&mut grads, *scores, self.value(*scores), d);
                }
                Op::SegmentXent {
                    logits,
                    segments,
                    targets,
                } => {
                    let g = gy.item();
                    let v = self.value(*logits);
                    let cols = v.cols();
                    let mut d = vec![0.0; v.len()];
                    for (seg, tgt) in segments.iter().zip(targets) {
                        for (c, &t) in tgt.iter().enumerate() {
                            let col: Vec<f64> = seg.clone().map(|r| v.get(r, c)).collect();
                            let lse = logsumexp(&col);
                            for (k, r) in seg.clone().enumerate() {
                                let mut p = (col[k] - lse).exp();
                                if k == t {
                                    p -= 1.0;
                                }
                                d[r * cols + c] += g * p;
                            }
                        }
                    }
                    accumulate(&mut grads, *logits, v, d);
                }
            }
        }
        result
    }
}

fn accumulate(grads: &mut [Option<Tensor>], v: Var, like: &Tensor, data: Vec<f64>) {
    match &mut grads[v.0] {
        Some(g) => {
            for (a, b) in g.data_mut().iter_mut().zip(&data) {
                *a += b;
            }
        }
        slot @ None => {
            *slot = Some(Tensor::new(like.shape().to_vec(), data).expect("gradient shape"));
        }
    }
}

/// Output rows and source rows of one convolution tap inside a segment.
fn tap_rows(seg: &Range<usize>, off: isize) -> Option<(Range<usize>, Range<usize>)> {
    let len = seg.len();
    let shift = off.unsigned_abs();
    if shift >= len {
        return None;
    }
    let n = len - shift;
    Some(if off < 0 {
        (seg.start + shift..seg.start + shift + n, seg.start..seg.start + n)
    } else {
        (seg.start..seg.start + n, seg.start + shift..seg.start + shift + n)
    })
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub(crate) fn logsumexp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

fn logsumexp_with_dummy(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(0.0, f64::max);
    max + ((-max).exp() + xs.iter().map(|x| (x - max).exp()).sum::<f64>()).ln()
}

/// Log-sum-exp over gold entries, or 0 (the dummy) when none is gold.
fn gold_logsumexp(xs: &[f64], gold: &[bool]) -> f64 {
    let sel: Vec<f64> = xs
        .iter()
        .zip(gold)
        .filter(|(_, &g)| g)
        .map(|(&x, _)| x)
        .collect();
    if sel.is_empty() {
        0.0
    } else {
        logsumexp(&sel)
    }
}

/// `c = a · b` for an `m × k` by `k × n` product given row/column strides.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    a_strides: (usize, usize),
    b: &[f64],
    b_strides: (usize, usize),
    c: &mut [f64],
) {
    gemm_acc(m, k, n, a, a_strides, b, b_strides, c, 0.0);
}

#[allow(clippy::too_many_arguments)]
fn gemm_acc(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    a_strides: (usize, usize),
    b: &[f64],
    b_strides: (usize, usize),
    c: &mut [f64],
    beta: f64,
) {
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        if beta == 0.0 {
            c[..m * n].fill(0.0);
        }
        return;
    }
    let a_need = (m - 1) * a_strides.0 + (k - 1) * a_strides.1 + 1;
    let b_need = (k - 1) * b_strides.0 + (n - 1) * b_strides.1 + 1;
    assert!(a.len() >= a_need && b.len() >= b_need && c.len() >= m * n);
    // SAFETY: the assertions above bound every strided access to the slices.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            a_strides.0 as isize,
            a_strides.1 as isize,
            b.as_ptr(),
            b_strides.0 as isize,
            b_strides.1 as isize,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}
