//! Reverse-mode gradient tape over [`Tensor`] values.
//!
//! Every operation appends a node holding its forward value and the
//! indices of its inputs. [`Tape::backward`] walks the nodes once in
//! reverse order and accumulates gradients into the tracked leaves.
//! The op vocabulary is closed: the elementary matrix ops, plus a few
//! fused kernels (block-diagonal graph propagation, multi-sequence
//! multi-head attention, mean squared error, pairwise hinge) that the
//! encoders and losses use in their hot paths.

use std::rc::Rc;

use crate::tensor::{matmul_into, matmul_nt_into, matmul_tn_into, softmax_in_place, Result, Tensor, TensorError};

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    AddRow(Var, Var),
    Relu(Var),
    Exp(Var),
    SoftmaxRows(Var),
    Transpose(Var),
    ConcatRows(Vec<Var>),
    ConcatCols(Vec<Var>),
    MeanRows(Var),
    GroupMean {
        x: Var,
        group: usize,
    },
    SelectRows {
        x: Var,
        idx: Rc<[usize]>,
    },
    SliceCols {
        x: Var,
        start: usize,
    },
    Sum(Var),
    Element {
        x: Var,
        row: usize,
        col: usize,
    },
    Propagate {
        x: Var,
        blocks: Rc<[Tensor]>,
    },
    Attention(Box<AttentionCache>),
    Mse {
        pred: Var,
        target: Tensor,
    },
    PairwiseHinge {
        scores: Var,
        pairs: Vec<(usize, usize)>,
        margin: f64,
    },
}

#[derive(Debug)]
struct AttentionCache {
    q: Var,
    k: Var,
    v: Var,
    seq_len: usize,
    heads: usize,
    /// Row-stochastic weights, laid out `[sequence][head][query][key]`.
    weights: Vec<f64>,
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    tracked: bool,
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients of a scalar with respect to the tracked leaves of a tape.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    /// `None` for constants and for intermediate (non-leaf) values.
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor> {
        self.grads.get_mut(v.0).and_then(Option::take)
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

    /// A value whose gradient is wanted (a trainable parameter or an input of interest).
    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push_raw(value, Op::Leaf, true)
    }

    /// A value treated as a constant; it never receives a gradient.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push_raw(value, Op::Leaf, false)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value.data()[0]
    }

    fn push_raw(&mut self, value: Tensor, op: Op, tracked: bool) -> Var {
        self.nodes.push(Node { value, op, tracked });
        Var(self.nodes.len() - 1)
    }

    fn push(&mut self, name: &'static str, value: Tensor, op: Op, inputs: &[Var]) -> Result<Var> {
        if !value.is_finite() {
            return Err(TensorError::NonFinite { op: name });
        }
        let tracked = inputs.iter().any(|v| self.nodes[v.0].tracked);
        Ok(self.push_raw(value, op, tracked))
    }

    fn val(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.val(a).matmul(self.val(b))?;
        self.push("matmul", out, Op::MatMul(a, b), &[a, b])
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.val(a).add(self.val(b))?;
        self.push("add", out, Op::Add(a, b), &[a, b])
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.val(a).sub(self.val(b))?;
        self.push("sub", out, Op::Sub(a, b), &[a, b])
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.val(a).mul(self.val(b))?;
        self.push("mul", out, Op::Mul(a, b), &[a, b])
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Result<Var> {
        let out = self.val(a).scale(s);
        self.push("scale", out, Op::Scale(a, s), &[a])
    }

    /// Adds a `1 × n` row to every row of an `m × n` matrix.
    pub fn add_row(&mut self, x: Var, bias: Var) -> Result<Var> {
        let (m, n) = self.val(x).require_matrix("add_row")?;
        let b = self.val(bias);
        if b.shape() != [1, n] {
            return Err(TensorError::ShapeMismatch {
                op: "add_row",
                lhs: self.val(x).shape().to_vec(),
                rhs: b.shape().to_vec(),
            });
        }
        let mut out = self.val(x).clone();
        let bd = b.data().to_vec();
        for i in 0..m {
            for (o, bv) in out.data_mut()[i * n..(i + 1) * n].iter_mut().zip(&bd) {
                *o += bv;
            }
        }
        self.push("add_row", out, Op::AddRow(x, bias), &[x, bias])
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        let out = self.val(a).relu();
        self.push("relu", out, Op::Relu(a), &[a])
    }

    pub fn exp(&mut self, a: Var) -> Result<Var> {
        let out = self.val(a).map(f64::exp);
        self.push("exp", out, Op::Exp(a), &[a])
    }

    pub fn softmax_rows(&mut self, a: Var) -> Result<Var> {
        let out = self.val(a).softmax_rows()?;
        self.push("softmax_rows", out, Op::SoftmaxRows(a), &[a])
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let out = self.val(a).transpose()?;
        self.push("transpose", out, Op::Transpose(a), &[a])
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let vals: Vec<&Tensor> = parts.iter().map(|v| self.val(*v)).collect();
        let out = Tensor::concat_rows(&vals)?;
        self.push("concat_rows", out, Op::ConcatRows(parts.to_vec()), parts)
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let vals: Vec<&Tensor> = parts.iter().map(|v| self.val(*v)).collect();
        let out = Tensor::concat_cols(&vals)?;
        self.push("concat_cols", out, Op::ConcatCols(parts.to_vec()), parts)
    }

    pub fn mean_rows(&mut self, a: Var) -> Result<Var> {
        let out = self.val(a).mean_rows()?;
        self.push("mean_rows", out, Op::MeanRows(a), &[a])
    }

    /// Averages each run of `group` consecutive rows into one row.
    pub fn group_mean(&mut self, x: Var, group: usize) -> Result<Var> {
        let (m, n) = self.val(x).require_matrix("group_mean")?;
        if group == 0 || m % group != 0 {
            return Err(TensorError::Invalid {
                op: "group_mean",
                msg: format!("{m} rows cannot be split into groups of {group}"),
            });
        }
        let g = m / group;
        let src = self.val(x).data();
        let mut out = vec![0.0; g * n];
        let inv = 1.0 / group as f64;
        for r in 0..m {
            let o = &mut out[(r / group) * n..(r / group + 1) * n];
            for (ov, sv) in o.iter_mut().zip(&src[r * n..(r + 1) * n]) {
                *ov += sv * inv;
            }
        }
        let out = Tensor::new(vec![g, n], out)?;
        self.push("group_mean", out, Op::GroupMean { x, group }, &[x])
    }

    /// Gathers rows by index (indices may repeat).
    pub fn select_rows(&mut self, x: Var, idx: Rc<[usize]>) -> Result<Var> {
        let (m, n) = self.val(x).require_matrix("select_rows")?;
        let src = self.val(x).data();
        let mut out = Vec::with_capacity(idx.len() * n);
        for &i in idx.iter() {
            if i >= m {
                return Err(TensorError::Invalid {
                    op: "select_rows",
                    msg: format!("row {i} out of range for {m} rows"),
                });
            }
            out.extend_from_slice(&src[i * n..(i + 1) * n]);
        }
        let out = Tensor::new(vec![idx.len(), n], out)?;
        self.push("select_rows", out, Op::SelectRows { x, idx }, &[x])
    }

    pub fn slice_cols(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let (m, n) = self.val(x).require_matrix("slice_cols")?;
        if start + len > n {
            return Err(TensorError::Invalid {
                op: "slice_cols",
                msg: format!("columns {start}..{} out of range for {n}", start + len),
            });
        }
        let src = self.val(x).data();
        let mut out = Vec::with_capacity(m * len);
        for i in 0..m {
            out.extend_from_slice(&src[i * n + start..i * n + start + len]);
        }
        let out = Tensor::new(vec![m, len], out)?;
        self.push("slice_cols", out, Op::SliceCols { x, start }, &[x])
    }

    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let out = Tensor::scalar(self.val(a).sum());
        self.push("sum", out, Op::Sum(a), &[a])
    }

    pub fn element(&mut self, x: Var, row: usize, col: usize) -> Result<Var> {
        let (m, n) = self.val(x).require_matrix("element")?;
        if row >= m || col >= n {
            return Err(TensorError::Invalid {
                op: "element",
                msg: format!("({row}, {col}) out of range for {m}×{n}"),
            });
        }
        let out = Tensor::scalar(self.val(x).get(row, col));
        self.push("element", out, Op::Element { x, row, col }, &[x])
    }

    /// Block-diagonal left multiplication: `x` is split into `blocks.len()`
    /// row blocks of `n` rows and block `b` becomes `blocks[b] · x_b`.
    pub fn propagate(&mut self, x: Var, blocks: Rc<[Tensor]>) -> Result<Var> {
        let (m, c) = self.val(x).require_matrix("propagate")?;
        let n = match blocks.first() {
            Some(b) => b.rows(),
            None => {
                return Err(TensorError::Invalid {
                    op: "propagate",
                    msg: "no blocks".into(),
                })
            }
        };
        if blocks.iter().any(|b| b.shape() != [n, n]) || m != n * blocks.len() {
            return Err(TensorError::ShapeMismatch {
                op: "propagate",
                lhs: self.val(x).shape().to_vec(),
                rhs: vec![blocks.len(), n, n],
            });
        }
        let src = self.val(x).data();
        let mut out = vec![0.0; m * c];
        for (b, p) in blocks.iter().enumerate() {
            let off = b * n * c;
            matmul_into(p.data(), &src[off..off + n * c], &mut out[off..off + n * c], n, n, c);
        }
        let out = Tensor::new(vec![m, c], out)?;
        self.push("propagate", out, Op::Propagate { x, blocks }, &[x])
    }

    /// Scaled dot-product attention over `rows / seq_len` independent
    /// sequences, with `heads` heads splitting the columns evenly.
    ///
    /// For each sequence `s` and head `i`:
    /// `A = softmax(Q_i K_iᵀ / √d_k)`, `H_i = A V_i`; the output places
    /// `H_i` back into head `i`'s column block, i.e. it is the concatenation
    /// of heads per row.
    pub fn attention(&mut self, q: Var, k: Var, v: Var, seq_len: usize, heads: usize) -> Result<Var> {
        let (m, w) = self.val(q).require_matrix("attention")?;
        for other in [k, v] {
            if self.val(other).shape() != [m, w] {
                return Err(TensorError::ShapeMismatch {
                    op: "attention",
                    lhs: vec![m, w],
                    rhs: self.val(other).shape().to_vec(),
                });
            }
        }
        if seq_len == 0 || m % seq_len != 0 {
            return Err(TensorError::Invalid {
                op: "attention",
                msg: format!("{m} rows are not a whole number of length-{seq_len} sequences"),
            });
        }
        if heads == 0 || w % heads != 0 {
            return Err(TensorError::Invalid {
                op: "attention",
                msg: format!("width {w} not divisible by {heads} heads"),
            });
        }
        let dk = w / heads;
        let n_seq = m / seq_len;
        let inv_sqrt = 1.0 / (dk as f64).sqrt();
        let (qd, kd, vd) = (self.val(q).data(), self.val(k).data(), self.val(v).data());
        let l = seq_len;
        let mut weights = vec![0.0; n_seq * heads * l * l];
        let mut out = vec![0.0; m * w];
        for s in 0..n_seq {
            for h in 0..heads {
                let a = &mut weights[(s * heads + h) * l * l..(s * heads + h + 1) * l * l];
                let col = h * dk;
                for i in 0..l {
                    let qi = &qd[(s * l + i) * w + col..(s * l + i) * w + col + dk];
                    for j in 0..l {
                        let kj = &kd[(s * l + j) * w + col..(s * l + j) * w + col + dk];
                        a[i * l + j] = qi.iter().zip(kj).map(|(x, y)| x * y).sum::<f64>() * inv_sqrt;
                    }
                    softmax_in_place(&mut a[i * l..(i + 1) * l]);
                    let orow = &mut out[(s * l + i) * w + col..(s * l + i) * w + col + dk];
                    for j in 0..l {
                        let aij = a[i * l + j];
                        let vj = &vd[(s * l + j) * w + col..(s * l + j) * w + col + dk];
                        for (o, vv) in orow.iter_mut().zip(vj) {
                            *o += aij * vv;
                        }
                    }
                }
            }
        }
        let out = Tensor::new(vec![m, w], out)?;
        let cache = AttentionCache {
            q,
            k,
            v,
            seq_len,
            heads,
            weights,
        };
        self.push("attention", out, Op::Attention(Box::new(cache)), &[q, k, v])
    }

    /// Attention weights recorded by an [`Tape::attention`] node, one
    /// `seq_len × seq_len` row-stochastic matrix per (sequence, head).
    pub fn attention_weights(&self, out: Var) -> Option<Vec<Tensor>> {
        match &self.nodes[out.0].op {
            Op::Attention(c) => {
                let l = c.seq_len;
                Some(
                    c.weights
                        .chunks(l * l)
                        .map(|w| Tensor::new(vec![l, l], w.to_vec()).expect("square block"))
                        .collect(),
                )
            }
            _ => None,
        }
    }

    /// Mean of squared differences against a constant target.
    pub fn mse(&mut self, pred: Var, target: Tensor) -> Result<Var> {
        let p = self.val(pred);
        if p.shape() != target.shape() {
            return Err(TensorError::ShapeMismatch {
                op: "mse",
                lhs: p.shape().to_vec(),
                rhs: target.shape().to_vec(),
            });
        }
        if p.is_empty() {
            return Err(TensorError::Invalid {
                op: "mse",
                msg: "empty prediction".into(),
            });
        }
        let n = p.len() as f64;
        let v: f64 = p
            .data()
            .iter()
            .zip(target.data())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            / n;
        self.push("mse", Tensor::scalar(v), Op::Mse { pred, target }, &[pred])
    }

    /// `Σ_{(i,j) ∈ pairs} max(0, margin − (s_i − s_j))` over a score column.
    pub fn pairwise_hinge(&mut self, scores: Var, pairs: Vec<(usize, usize)>, margin: f64) -> Result<Var> {
        let s = self.val(scores);
        let (m, c) = s.require_matrix("pairwise_hinge")?;
        if c != 1 {
            return Err(TensorError::ShapeMismatch {
                op: "pairwise_hinge",
                lhs: vec![m, c],
                rhs: vec![m, 1],
            });
        }
        if pairs.iter().any(|&(i, j)| i >= m || j >= m) {
            return Err(TensorError::Invalid {
                op: "pairwise_hinge",
                msg: format!("pair index out of range for {m} scores"),
            });
        }
        let d = s.data();
        let v: f64 = pairs.iter().map(|&(i, j)| (margin - (d[i] - d[j])).max(0.0)).sum();
        self.push(
            "pairwise_hinge",
            Tensor::scalar(v),
            Op::PairwiseHinge { scores, pairs, margin },
            &[scores],
        )
    }

    /// Gradients of the scalar `loss` with respect to every tracked leaf.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let lv = self.val(loss);
        if lv.len() != 1 {
            return Err(TensorError::Invalid {
                op: "backward",
                msg: format!("loss must be scalar, got shape {:?}", lv.shape()),
            });
        }
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::full(lv.shape(), 1.0));
        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if !node.tracked || matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.backprop_node(node, &g, &mut grads)?;
        }
        for (i, node) in self.nodes.iter().enumerate() {
            if matches!(node.op, Op::Leaf) && node.tracked && grads[i].is_none() {
                grads[i] = Some(Tensor::zeros(node.value.shape()));
            }
        }
        Ok(Gradients { grads })
    }

    fn tracked(&self, v: Var) -> bool {
        self.nodes[v.0].tracked
    }

    fn accumulate(&self, grads: &mut [Option<Tensor>], v: Var, g: Tensor) {
        if !self.tracked(v) {
            return;
        }
        match &mut grads[v.0] {
            Some(acc) => acc.data_mut().iter_mut().zip(g.data()).for_each(|(a, b)| *a += b),
            slot => *slot = Some(g),
        }
    }

    fn backprop_node(&self, node: &Node, g: &Tensor, grads: &mut [Option<Tensor>]) -> Result<()> {
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (av, bv) = (self.val(*a), self.val(*b));
                let (m, k) = (av.rows(), av.cols());
                let n = bv.cols();
                if self.tracked(*a) {
                    let mut ga = vec![0.0; m * k];
                    matmul_nt_into(g.data(), bv.data(), &mut ga, m, n, k);
                    self.accumulate(grads, *a, Tensor::new(vec![m, k], ga)?);
                }
                if self.tracked(*b) {
                    let mut gb = vec![0.0; k * n];
                    matmul_tn_into(av.data(), g.data(), &mut gb, m, k, n);
                    self.accumulate(grads, *b, Tensor::new(vec![k, n], gb)?);
                }
            }
            Op::Add(a, b) => {
                self.accumulate(grads, *a, g.clone());
                self.accumulate(grads, *b, g.clone());
            }
            Op::Sub(a, b) => {
                self.accumulate(grads, *a, g.clone());
                self.accumulate(grads, *b, g.scale(-1.0));
            }
            Op::Mul(a, b) => {
                if self.tracked(*a) {
                    self.accumulate(grads, *a, g.mul(self.val(*b))?);
                }
                if self.tracked(*b) {
                    self.accumulate(grads, *b, g.mul(self.val(*a))?);
                }
            }
            Op::Scale(a, s) => self.accumulate(grads, *a, g.scale(*s)),
            Op::AddRow(x, b) => {
                self.accumulate(grads, *x, g.clone());
                if self.tracked(*b) {
                    self.accumulate(grads, *b, g.mean_rows()?.scale(g.rows() as f64));
                }
            }
            Op::Relu(a) => {
                let x = self.val(*a);
                let d = g
                    .data()
                    .iter()
                    .zip(x.data())
                    .map(|(gv, xv)| if *xv > 0.0 { *gv } else { 0.0 })
                    .collect();
                self.accumulate(grads, *a, Tensor::new(x.shape().to_vec(), d)?);
            }
            Op::Exp(a) => self.accumulate(grads, *a, g.mul(&node.value)?),
            Op::SoftmaxRows(a) => {
                let y = &node.value;
                let (m, n) = (y.rows(), y.cols());
                let mut d = vec![0.0; m * n];
                for i in 0..m {
                    let yr = y.row(i);
                    let gr = g.row(i);
                    let dot: f64 = yr.iter().zip(gr).map(|(a, b)| a * b).sum();
                    for j in 0..n {
                        d[i * n + j] = yr[j] * (gr[j] - dot);
                    }
                }
                self.accumulate(grads, *a, Tensor::new(vec![m, n], d)?);
            }
            Op::Transpose(a) => self.accumulate(grads, *a, g.transpose()?),
            Op::ConcatRows(parts) => {
                let cols = g.cols();
                let mut off = 0;
                for p in parts {
                    let r = self.val(*p).rows();
                    let slice = g.data()[off * cols..(off + r) * cols].to_vec();
                    self.accumulate(grads, *p, Tensor::new(vec![r, cols], slice)?);
                    off += r;
                }
            }
            Op::ConcatCols(parts) => {
                let (m, total) = (g.rows(), g.cols());
                let mut start = 0;
                for p in parts {
                    let c = self.val(*p).cols();
                    let mut d = Vec::with_capacity(m * c);
                    for i in 0..m {
                        d.extend_from_slice(&g.data()[i * total + start..i * total + start + c]);
                    }
                    self.accumulate(grads, *p, Tensor::new(vec![m, c], d)?);
                    start += c;
                }
            }
            Op::MeanRows(a) => {
                let (m, n) = (self.val(*a).rows(), self.val(*a).cols());
                let inv = 1.0 / m as f64;
                let mut d = Vec::with_capacity(m * n);
                for _ in 0..m {
                    d.extend(g.data().iter().map(|v| v * inv));
                }
                self.accumulate(grads, *a, Tensor::new(vec![m, n], d)?);
            }
            Op::GroupMean { x, group } => {
                let (m, n) = (self.val(*x).rows(), self.val(*x).cols());
                let inv = 1.0 / *group as f64;
                let mut d = Vec::with_capacity(m * n);
                for r in 0..m {
                    d.extend(g.row(r / group).iter().map(|v| v * inv));
                }
                self.accumulate(grads, *x, Tensor::new(vec![m, n], d)?);
            }
            Op::SelectRows { x, idx } => {
                let (m, n) = (self.val(*x).rows(), self.val(*x).cols());
                let mut d = vec![0.0; m * n];
                for (r, &i) in idx.iter().enumerate() {
                    for (o, v) in d[i * n..(i + 1) * n].iter_mut().zip(g.row(r)) {
                        *o += v;
                    }
                }
                self.accumulate(grads, *x, Tensor::new(vec![m, n], d)?);
            }
            Op::SliceCols { x, start } => {
                let (m, n) = (self.val(*x).rows(), self.val(*x).cols());
                let len = g.cols();
                let mut d = vec![0.0; m * n];
                for i in 0..m {
                    d[i * n + start..i * n + start + len].copy_from_slice(g.row(i));
                }
                self.accumulate(grads, *x, Tensor::new(vec![m, n], d)?);
            }
            Op::Sum(a) => {
                let s = g.data()[0];
                self.accumulate(grads, *a, Tensor::full(self.val(*a).shape(), s));
            }
            Op::Element { x, row, col } => {
                let mut d = Tensor::zeros(self.val(*x).shape());
                d.set(*row, *col, g.data()[0]);
                self.accumulate(grads, *x, d);
            }
            Op::Propagate { x, blocks } => {
                let c = g.cols();
                let n = blocks[0].rows();
                let mut d = vec![0.0; g.len()];
                for (b, p) in blocks.iter().enumerate() {
                    let off = b * n * c;
                    matmul_tn_into(p.data(), &g.data()[off..off + n * c], &mut d[off..off + n * c], n, n, c);
                }
                self.accumulate(grads, *x, Tensor::new(g.shape().to_vec(), d)?);
            }
            Op::Attention(cache) => self.backprop_attention(cache, g, grads)?,
            Op::Mse { pred, target } => {
                let p = self.val(*pred);
                let scale = 2.0 * g.data()[0] / p.len() as f64;
                let d = p
                    .data()
                    .iter()
                    .zip(target.data())
                    .map(|(a, b)| scale * (a - b))
                    .collect();
                self.accumulate(grads, *pred, Tensor::new(p.shape().to_vec(), d)?);
            }
            Op::PairwiseHinge { scores, pairs, margin } => {
                let s = self.val(*scores);
                let gs = g.data()[0];
                let mut d = vec![0.0; s.len()];
                for &(i, j) in pairs {
                    if margin - (s.data()[i] - s.data()[j]) > 0.0 {
                        d[i] -= gs;
                        d[j] += gs;
                    }
                }
                self.accumulate(grads, *scores, Tensor::new(s.shape().to_vec(), d)?);
            }
        }
        Ok(())
    }

    fn backprop_attention(&self, c: &AttentionCache, g: &Tensor, grads: &mut [Option<Tensor>]) -> Result<()> {
        let (qt, kt, vt) = (self.val(c.q), self.val(c.k), self.val(c.v));
        let (m, w) = (qt.rows(), qt.cols());
        let l = c.seq_len;
        let dk = w / c.heads;
        let inv_sqrt = 1.0 / (dk as f64).sqrt();
        let (qd, kd, vd, gd) = (qt.data(), kt.data(), vt.data(), g.data());
        let mut dq = vec![0.0; m * w];
        let mut dkk = vec![0.0; m * w];
        let mut dv = vec![0.0; m * w];
        let mut da = vec![0.0; l * l];
        for s in 0..m / l {
            for h in 0..c.heads {
                let a = &c.weights[(s * c.heads + h) * l * l..(s * c.heads + h + 1) * l * l];
                let col = h * dk;
                let at = |r: usize| (s * l + r) * w + col;
                for i in 0..l {
                    let gi = &gd[at(i)..at(i) + dk];
                    for j in 0..l {
                        let vj = &vd[at(j)..at(j) + dk];
                        da[i * l + j] = gi.iter().zip(vj).map(|(x, y)| x * y).sum();
                        let aij = a[i * l + j];
                        for (o, gv) in dv[at(j)..at(j) + dk].iter_mut().zip(gi) {
                            *o += aij * gv;
                        }
                    }
                }
                for i in 0..l {
                    let row = &a[i * l..(i + 1) * l];
                    let dot: f64 = row.iter().zip(&da[i * l..(i + 1) * l]).map(|(x, y)| x * y).sum();
                    for j in 0..l {
                        let ds = row[j] * (da[i * l + j] - dot) * inv_sqrt;
                        if ds == 0.0 {
                            continue;
                        }
                        for t in 0..dk {
                            dq[at(i) + t] += ds * kd[at(j) + t];
                            dkk[at(j) + t] += ds * qd[at(i) + t];
                        }
                    }
                }
            }
        }
        self.accumulate(grads, c.q, Tensor::new(vec![m, w], dq)?);
        self.accumulate(grads, c.k, Tensor::new(vec![m, w], dkk)?);
        self.accumulate(grads, c.v, Tensor::new(vec![m, w], dv)?);
        Ok(())
    }
}
