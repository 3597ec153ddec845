use std::collections::BTreeMap;

use super::gemm::gemm;
use super::{NamedTensors, Tensor};
use crate::error::{Error, Result};

/// Masked-out logits are replaced by this before normalization.
const MASKED_LOGIT: f64 = -1e30;

/// Handle to a node of a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Boolean keep-mask for [`Graph::softmax`]; `true` marks an entry that
/// participates in the normalization.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Mask {
    shape: Vec<usize>,
    keep: Vec<bool>,
}

impl Mask {
    pub fn new(shape: &[usize], keep: Vec<bool>) -> Result<Self> {
        if shape.iter().product::<usize>() != keep.len() {
            return Err(Error::dim("mask", shape, &[keep.len()]));
        }
        Ok(Self {
            shape: shape.to_vec(),
            keep,
        })
    }

    pub fn all(shape: &[usize]) -> Self {
        Self {
            shape: shape.to_vec(),
            keep: vec![true; shape.iter().product()],
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn keep(&self) -> &[bool] {
        &self.keep
    }
}

enum Op {
    Leaf,
    MatMul {
        a: Var,
        b: Var,
        ta: bool,
        tb: bool,
    },
    Add(Var, Var),
    Sub(Var, Var),
    Hadamard(Var, Var),
    Scale(Var, f64),
    Relu(Var),
    AddBias(Var, Var),
    Softmax(Var),
    LayerNorm {
        x: Var,
        gain: Var,
        bias: Var,
        xhat: Vec<f64>,
        inv_std: Vec<f64>,
    },
    Reshape(Var),
    Permute {
        x: Var,
        perm: Vec<usize>,
    },
    GatherColumns {
        table: Var,
        ids: Vec<usize>,
    },
    CrossEntropy {
        logits: Var,
        targets: Vec<usize>,
        rows: Vec<usize>,
        probs: Vec<f64>,
    },
    Sum(Var),
}

struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Append-only record of a computation. Nodes are stored in creation order,
/// which is a topological order by construction.
#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
    names: BTreeMap<String, Var>,
}

/// Result of [`Graph::backward`]: a gradient for every trainable leaf.
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
    names: BTreeMap<String, Var>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    pub fn by_name(&self, name: &str) -> Option<&Tensor> {
        self.names.get(name).and_then(|&v| self.get(v))
    }

    pub fn into_named(mut self) -> NamedTensors {
        self.names
            .iter()
            .map(|(name, v)| {
                let g = self.grads[v.0].take().expect("leaf gradient populated");
                (name.clone(), g)
            })
            .collect()
    }
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Registers a trainable leaf. Names must be unique within a graph.
    pub fn param(&mut self, name: impl Into<String>, value: Tensor) -> Var {
        let name = name.into();
        let v = Var(self.nodes.len());
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            requires_grad: true,
        });
        let prev = self.names.insert(name.clone(), v);
        assert!(prev.is_none(), "duplicate parameter name `{name}`");
        v
    }

    /// Registers a constant leaf (no gradient).
    pub fn input(&mut self, value: Tensor) -> Var {
        let v = Var(self.nodes.len());
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            requires_grad: false,
        });
        v
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn push(&mut self, op_name: &'static str, value: Tensor, op: Op) -> Result<Var> {
        if !value.is_finite() {
            return Err(Error::Numerical {
                param: op_name.into(),
                detail: "non-finite output".into(),
            });
        }
        let requires_grad = match &op {
            Op::Leaf => false,
            Op::MatMul { a, b, .. }
            | Op::Add(a, b)
            | Op::Sub(a, b)
            | Op::Hadamard(a, b)
            | Op::AddBias(a, b) => self.needs(*a) || self.needs(*b),
            Op::Scale(a, _)
            | Op::Relu(a)
            | Op::Softmax(a)
            | Op::Reshape(a)
            | Op::Sum(a)
            | Op::Permute { x: a, .. }
            | Op::GatherColumns { table: a, .. }
            | Op::CrossEntropy { logits: a, .. } => self.needs(*a),
            Op::LayerNorm { x, gain, bias, .. } => {
                self.needs(*x) || self.needs(*gain) || self.needs(*bias)
            }
        };
        let v = Var(self.nodes.len());
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Ok(v)
    }

    /// Matrix product `a · b` of 2-D tensors, or a batched product over the
    /// leading axis of 3-D tensors.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.matmul_t(a, b, false, false)
    }

    /// `a · bᵀ`.
    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Result<Var> {
        self.matmul_t(a, b, false, true)
    }

    /// General product `op(a) · op(b)` where `op` transposes the trailing two
    /// axes when the corresponding flag is set.
    pub fn matmul_t(&mut self, a: Var, b: Var, ta: bool, tb: bool) -> Result<Var> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        let dims = matmul_dims(&sa, &sb, ta, tb).ok_or_else(|| Error::dim("matmul", &sa, &sb))?;
        let MatDims { batch, m, k, n } = dims;
        let mut out = vec![0.0; batch * m * n];
        {
            let (av, bv) = (self.value(a).data(), self.value(b).data());
            for g in 0..batch {
                gemm(
                    m,
                    k,
                    n,
                    &av[g * m * k..(g + 1) * m * k],
                    ta,
                    &bv[g * k * n..(g + 1) * k * n],
                    tb,
                    &mut out[g * m * n..(g + 1) * m * n],
                    0.0,
                );
            }
        }
        let shape = if sa.len() == 3 {
            vec![batch, m, n]
        } else {
            vec![m, n]
        };
        self.push(
            "matmul",
            Tensor::new(shape, out)?,
            Op::MatMul { a, b, ta, tb },
        )
    }

    fn binary(
        &mut self,
        name: &'static str,
        a: Var,
        b: Var,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<Tensor> {
        let (x, y) = (self.value(a), self.value(b));
        if x.shape() != y.shape() {
            return Err(Error::dim(name, x.shape(), y.shape()));
        }
        let data = x
            .data()
            .iter()
            .zip(y.data())
            .map(|(&p, &q)| f(p, q))
            .collect();
        Tensor::new(x.shape().to_vec(), data)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let t = self.binary("add", a, b, |p, q| p + q)?;
        self.push("add", t, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let t = self.binary("sub", a, b, |p, q| p - q)?;
        self.push("sub", t, Op::Sub(a, b))
    }

    pub fn hadamard(&mut self, a: Var, b: Var) -> Result<Var> {
        let t = self.binary("hadamard", a, b, |p, q| p * q)?;
        self.push("hadamard", t, Op::Hadamard(a, b))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Result<Var> {
        let t = self.value(a).map(|x| x * c);
        self.push("scale", t, Op::Scale(a, c))
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        let t = self.value(a).map(|x| x.max(0.0));
        self.push("relu", t, Op::Relu(a))
    }

    /// Adds a vector `b` of length `n` to every row of `x[..., n]`.
    pub fn add_bias(&mut self, x: Var, b: Var) -> Result<Var> {
        let (xv, bv) = (self.value(x), self.value(b));
        if bv.ndim() != 1 || bv.numel() != xv.cols() {
            return Err(Error::dim("add_bias", xv.shape(), bv.shape()));
        }
        let n = xv.cols();
        let mut data = xv.data().to_vec();
        for row in data.chunks_exact_mut(n) {
            for (d, &bias) in row.iter_mut().zip(bv.data()) {
                *d += bias;
            }
        }
        let t = Tensor::new(xv.shape().to_vec(), data)?;
        self.push("add_bias", t, Op::AddBias(x, b))
    }

    /// Softmax over the trailing axis. Masked entries come out as exact zeros.
    pub fn softmax(&mut self, x: Var, mask: Option<&Mask>) -> Result<Var> {
        let xv = self.value(x);
        if let Some(m) = mask {
            if m.shape() != xv.shape() {
                return Err(Error::dim("softmax", xv.shape(), m.shape()));
            }
        }
        let n = xv.cols();
        let mut data = xv.data().to_vec();
        for (r, row) in data.chunks_exact_mut(n).enumerate() {
            let keep = mask.map(|m| &m.keep()[r * n..(r + 1) * n]);
            if let Some(keep) = keep {
                if !keep.iter().any(|&k| k) {
                    return Err(Error::DegenerateMask { row: r });
                }
                for (v, &k) in row.iter_mut().zip(keep) {
                    if !k {
                        *v = MASKED_LOGIT;
                    }
                }
            }
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut total = 0.0;
            for v in row.iter_mut() {
                *v = (*v - max).exp();
                total += *v;
            }
            for v in row.iter_mut() {
                *v /= total;
            }
            if let Some(keep) = keep {
                for (v, &k) in row.iter_mut().zip(keep) {
                    if !k {
                        *v = 0.0;
                    }
                }
            }
        }
        let t = Tensor::new(xv.shape().to_vec(), data)?;
        self.push("softmax", t, Op::Softmax(x))
    }

    /// Layer normalization over the trailing axis:
    /// `gain ⊙ (x − μ) / √(σ² + eps) + bias`.
    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var, eps: f64) -> Result<Var> {
        let xv = self.value(x);
        let d = xv.cols();
        let (gv, bv) = (self.value(gain), self.value(bias));
        if gv.shape() != [d] || bv.shape() != [d] {
            return Err(Error::dim("layer_norm", xv.shape(), gv.shape()));
        }
        let rows = xv.rows();
        let mut xhat = vec![0.0; xv.numel()];
        let mut inv_std = vec![0.0; rows];
        let mut out = vec![0.0; xv.numel()];
        for r in 0..rows {
            let row = xv.row(r);
            let mean = row.iter().sum::<f64>() / d as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
            let is = 1.0 / (var + eps).sqrt();
            inv_std[r] = is;
            for j in 0..d {
                let h = (row[j] - mean) * is;
                xhat[r * d + j] = h;
                out[r * d + j] = gv.data()[j] * h + bv.data()[j];
            }
        }
        let t = Tensor::new(xv.shape().to_vec(), out)?;
        self.push(
            "layer_norm",
            t,
            Op::LayerNorm {
                x,
                gain,
                bias,
                xhat,
                inv_std,
            },
        )
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let t = self.value(x).clone().reshape(shape)?;
        self.push("reshape", t, Op::Reshape(x))
    }

    /// Axis permutation: output axis `i` is input axis `perm[i]`.
    pub fn permute(&mut self, x: Var, perm: &[usize]) -> Result<Var> {
        let xv = self.value(x);
        let mut seen = vec![false; xv.ndim()];
        if perm.len() != xv.ndim()
            || perm
                .iter()
                .any(|&p| p >= seen.len() || std::mem::replace(&mut seen[p], true))
        {
            return Err(Error::dim("permute", xv.shape(), perm));
        }
        let t = permute_tensor(xv, perm);
        self.push(
            "permute",
            t,
            Op::Permute {
                x,
                perm: perm.to_vec(),
            },
        )
    }

    /// Selects columns `ids` of `table[d × V]`, producing `[ids.len() × d]`.
    pub fn gather_columns(&mut self, table: Var, ids: &[usize]) -> Result<Var> {
        let tv = self.value(table);
        if tv.ndim() != 2 {
            return Err(Error::dim("gather_columns", tv.shape(), &[ids.len()]));
        }
        let (d, vocab) = (tv.shape()[0], tv.shape()[1]);
        if let Some(&bad) = ids.iter().find(|&&i| i >= vocab) {
            return Err(Error::Vocabulary(format!(
                "token id {bad} >= vocabulary size {vocab}"
            )));
        }
        let mut out = vec![0.0; ids.len() * d];
        for (i, &id) in ids.iter().enumerate() {
            for j in 0..d {
                out[i * d + j] = tv.data()[j * vocab + id];
            }
        }
        let t = Tensor::new(vec![ids.len(), d], out)?;
        self.push(
            "gather_columns",
            t,
            Op::GatherColumns {
                table,
                ids: ids.to_vec(),
            },
        )
    }

    /// Mean negative log-likelihood of `targets` under `softmax(logits)` over
    /// the rows where `mask` is true. Masked rows are never read.
    pub fn cross_entropy(&mut self, logits: Var, targets: &[usize], mask: &[bool]) -> Result<Var> {
        let lv = self.value(logits);
        if lv.ndim() != 2 || targets.len() != lv.shape()[0] || mask.len() != targets.len() {
            return Err(Error::dim(
                "cross_entropy",
                lv.shape(),
                &[targets.len(), mask.len()],
            ));
        }
        let vocab = lv.cols();
        let rows: Vec<usize> = (0..targets.len()).filter(|&r| mask[r]).collect();
        if rows.is_empty() {
            return Err(Error::DegenerateBatch);
        }
        let mut probs = Vec::with_capacity(rows.len() * vocab);
        let mut total = 0.0;
        for &r in &rows {
            let t = targets[r];
            if t >= vocab {
                return Err(Error::Vocabulary(format!(
                    "target id {t} >= vocabulary size {vocab}"
                )));
            }
            let row = lv.row(r);
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let sum_exp: f64 = row.iter().map(|v| (v - max).exp()).sum();
            let lse = max + sum_exp.ln();
            total += lse - row[t];
            probs.extend(row.iter().map(|v| (v - lse).exp()));
        }
        let loss = Tensor::scalar(total / rows.len() as f64);
        self.push(
            "cross_entropy",
            loss,
            Op::CrossEntropy {
                logits,
                targets: targets.to_vec(),
                rows,
                probs,
            },
        )
    }

    pub fn sum(&mut self, x: Var) -> Result<Var> {
        let s = Tensor::scalar(self.value(x).sum());
        self.push("sum", s, Op::Sum(x))
    }

    /// Reverse sweep from a scalar `loss`.
    ///
    /// Every trainable leaf receives a gradient, zero when `loss` does not
    /// depend on it. Intermediate gradients are released as the sweep passes.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let lv = self.value(loss);
        if lv.numel() != 1 {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                lv.shape()
            )));
        }
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::full(lv.shape(), 1.0));

        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if !node.requires_grad || matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(dy) = grads[i].take() else { continue };
            self.backprop_node(node, dy, &mut grads);
        }

        for node_idx in self.names.values() {
            if grads[node_idx.0].is_none() {
                grads[node_idx.0] = Some(Tensor::zeros(self.shape(*node_idx)));
            }
        }
        Ok(Gradients {
            grads,
            names: self.names.clone(),
        })
    }

    fn accumulate(&self, grads: &mut [Option<Tensor>], v: Var, g: Tensor) {
        if !self.needs(v) {
            return;
        }
        match &mut grads[v.0] {
            Some(acc) => {
                for (a, b) in acc.data_mut().iter_mut().zip(g.data()) {
                    *a += b;
                }
            }
            slot @ None => *slot = Some(g),
        }
    }

    fn backprop_node(&self, node: &Node, dy: Tensor, grads: &mut [Option<Tensor>]) {
        let y = &node.value;
        match &node.op {
            Op::Leaf => {}
            Op::MatMul { a, b, ta, tb } => {
                let (ta, tb) = (*ta, *tb);
                let (av, bv) = (self.value(*a), self.value(*b));
                let dims = matmul_dims(av.shape(), bv.shape(), ta, tb).expect("checked in forward");
                let MatDims { batch, m, k, n } = dims;
                if self.needs(*a) {
                    let mut da = vec![0.0; av.numel()];
                    for g in 0..batch {
                        let dc = &dy.data()[g * m * n..(g + 1) * m * n];
                        let bs = &bv.data()[g * k * n..(g + 1) * k * n];
                        let out = &mut da[g * m * k..(g + 1) * m * k];
                        if ta {
                            gemm(k, n, m, bs, tb, dc, true, out, 0.0);
                        } else {
                            gemm(m, n, k, dc, false, bs, !tb, out, 0.0);
                        }
                    }
                    let t = Tensor::new(av.shape().to_vec(), da).expect("shape");
                    self.accumulate(grads, *a, t);
                }
                if self.needs(*b) {
                    let mut db = vec![0.0; bv.numel()];
                    for g in 0..batch {
                        let dc = &dy.data()[g * m * n..(g + 1) * m * n];
                        let as_ = &av.data()[g * m * k..(g + 1) * m * k];
                        let out = &mut db[g * k * n..(g + 1) * k * n];
                        if tb {
                            gemm(n, m, k, dc, true, as_, ta, out, 0.0);
                        } else {
                            gemm(k, m, n, as_, !ta, dc, false, out, 0.0);
                        }
                    }
                    let t = Tensor::new(bv.shape().to_vec(), db).expect("shape");
                    self.accumulate(grads, *b, t);
                }
            }
            Op::Add(a, b) => {
                self.accumulate(grads, *b, dy.clone());
                self.accumulate(grads, *a, dy);
            }
            Op::Sub(a, b) => {
                self.accumulate(grads, *b, dy.map(|g| -g));
                self.accumulate(grads, *a, dy);
            }
            Op::Hadamard(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                if self.needs(*a) {
                    let d = zip_map(&dy, bv, |g, q| g * q);
                    self.accumulate(grads, *a, d);
                }
                if self.needs(*b) {
                    let d = zip_map(&dy, av, |g, p| g * p);
                    self.accumulate(grads, *b, d);
                }
            }
            Op::Scale(a, c) => {
                let c = *c;
                self.accumulate(grads, *a, dy.map(|g| g * c));
            }
            Op::Relu(a) => {
                let d = zip_map(&dy, self.value(*a), |g, x| if x > 0.0 { g } else { 0.0 });
                self.accumulate(grads, *a, d);
            }
            Op::AddBias(x, b) => {
                if self.needs(*b) {
                    let n = dy.cols();
                    let mut db = vec![0.0; n];
                    for row in dy.data().chunks_exact(n) {
                        for (acc, g) in db.iter_mut().zip(row) {
                            *acc += g;
                        }
                    }
                    self.accumulate(grads, *b, Tensor::vector(db));
                }
                self.accumulate(grads, *x, dy);
            }
            Op::Softmax(x) => {
                let n = y.cols();
                let mut dx = dy.into_data();
                for (drow, yrow) in dx.chunks_exact_mut(n).zip(y.data().chunks_exact(n)) {
                    let dot: f64 = drow.iter().zip(yrow).map(|(g, p)| g * p).sum();
                    for (g, p) in drow.iter_mut().zip(yrow) {
                        *g = p * (*g - dot);
                    }
                }
                let t = Tensor::new(y.shape().to_vec(), dx).expect("shape");
                self.accumulate(grads, *x, t);
            }
            Op::LayerNorm {
                x,
                gain,
                bias,
                xhat,
                inv_std,
            } => {
                let d = y.cols();
                let gv = self.value(*gain).data();
                if self.needs(*gain) || self.needs(*bias) {
                    let mut dg = vec![0.0; d];
                    let mut db = vec![0.0; d];
                    for (row, hrow) in dy.data().chunks_exact(d).zip(xhat.chunks_exact(d)) {
                        for j in 0..d {
                            dg[j] += row[j] * hrow[j];
                            db[j] += row[j];
                        }
                    }
                    self.accumulate(grads, *gain, Tensor::vector(dg));
                    self.accumulate(grads, *bias, Tensor::vector(db));
                }
                if self.needs(*x) {
                    let mut dx = vec![0.0; y.numel()];
                    let nf = d as f64;
                    for r in 0..y.rows() {
                        let row = &dy.data()[r * d..(r + 1) * d];
                        let h = &xhat[r * d..(r + 1) * d];
                        let mut sum_dh = 0.0;
                        let mut sum_dh_h = 0.0;
                        for j in 0..d {
                            let dh = row[j] * gv[j];
                            sum_dh += dh;
                            sum_dh_h += dh * h[j];
                        }
                        let is = inv_std[r];
                        for j in 0..d {
                            let dh = row[j] * gv[j];
                            dx[r * d + j] = is / nf * (nf * dh - sum_dh - h[j] * sum_dh_h);
                        }
                    }
                    let t = Tensor::new(y.shape().to_vec(), dx).expect("shape");
                    self.accumulate(grads, *x, t);
                }
            }
            Op::Reshape(x) => {
                let t = dy.reshape(self.shape(*x)).expect("shape");
                self.accumulate(grads, *x, t);
            }
            Op::Permute { x, perm } => {
                let mut inv = vec![0; perm.len()];
                for (i, &p) in perm.iter().enumerate() {
                    inv[p] = i;
                }
                let t = permute_tensor(&dy, &inv);
                self.accumulate(grads, *x, t);
            }
            Op::GatherColumns { table, ids } => {
                let tv = self.value(*table);
                let (d, vocab) = (tv.shape()[0], tv.shape()[1]);
                let mut dt = vec![0.0; tv.numel()];
                for (i, &id) in ids.iter().enumerate() {
                    for j in 0..d {
                        dt[j * vocab + id] += dy.data()[i * d + j];
                    }
                }
                let t = Tensor::new(tv.shape().to_vec(), dt).expect("shape");
                self.accumulate(grads, *table, t);
            }
            Op::CrossEntropy {
                logits,
                targets,
                rows,
                probs,
            } => {
                let lv = self.value(*logits);
                let vocab = lv.cols();
                let scale = dy.data()[0] / rows.len() as f64;
                let mut dl = vec![0.0; lv.numel()];
                for (i, &r) in rows.iter().enumerate() {
                    let p = &probs[i * vocab..(i + 1) * vocab];
                    let out = &mut dl[r * vocab..(r + 1) * vocab];
                    for j in 0..vocab {
                        out[j] = scale * p[j];
                    }
                    out[targets[r]] -= scale;
                }
                let t = Tensor::new(lv.shape().to_vec(), dl).expect("shape");
                self.accumulate(grads, *logits, t);
            }
            Op::Sum(x) => {
                let t = Tensor::full(self.shape(*x), dy.data()[0]);
                self.accumulate(grads, *x, t);
            }
        }
    }
}

struct MatDims {
    batch: usize,
    m: usize,
    k: usize,
    n: usize,
}

fn matmul_dims(sa: &[usize], sb: &[usize], ta: bool, tb: bool) -> Option<MatDims> {
    let (batch, a2, b2) = match (sa.len(), sb.len()) {
        (2, 2) => (1, sa, sb),
        (3, 3) if sa[0] == sb[0] => (sa[0], &sa[1..], &sb[1..]),
        _ => return None,
    };
    let (m, ka) = if ta { (a2[1], a2[0]) } else { (a2[0], a2[1]) };
    let (kb, n) = if tb { (b2[1], b2[0]) } else { (b2[0], b2[1]) };
    (ka == kb).then_some(MatDims { batch, m, k: ka, n })
}

fn zip_map(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    let data = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(&p, &q)| f(p, q))
        .collect();
    Tensor::new(a.shape().to_vec(), data).expect("shape")
}

fn permute_tensor(x: &Tensor, perm: &[usize]) -> Tensor {
    let shape = x.shape();
    let nd = shape.len();
    let mut in_strides = vec![1; nd];
    for i in (0..nd.saturating_sub(1)).rev() {
        in_strides[i] = in_strides[i + 1] * shape[i + 1];
    }
    let out_shape: Vec<usize> = perm.iter().map(|&p| shape[p]).collect();
    if nd <= 1 {
        return x.clone();
    }
    let strides: Vec<usize> = perm.iter().map(|&p| in_strides[p]).collect();
    let src = x.data();
    let inner = out_shape[nd - 1];
    let inner_stride = strides[nd - 1];
    let mut out = Vec::with_capacity(x.numel());
    let mut idx = vec![0; nd - 1];
    let mut base = 0;
    loop {
        if inner_stride == 1 {
            out.extend_from_slice(&src[base..base + inner]);
        } else {
            out.extend((0..inner).map(|j| src[base + j * inner_stride]));
        }
        // odometer over the outer axes, keeping `base` in sync
        let mut ax = nd - 1;
        loop {
            if ax == 0 {
                return Tensor::new(out_shape, out).expect("permute preserves size");
            }
            ax -= 1;
            idx[ax] += 1;
            base += strides[ax];
            if idx[ax] < out_shape[ax] {
                break;
            }
            base -= strides[ax] * out_shape[ax];
            idx[ax] = 0;
        }
    }
}
