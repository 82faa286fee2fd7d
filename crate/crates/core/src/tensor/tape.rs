//! Wengert-style tape. Every op appends a node holding its output value and
//! enough saved state to replay the chain rule; `backward` walks the nodes in
//! strict reverse order and accumulates contributions additively.

use super::{gemm_nn, gemm_nt, gemm_tn, Tensor};
use crate::error::{Error, Result};

/// Handle to a node on a [`Tape`]. Only meaningful for the tape that issued it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
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
    MatMulNt(Var, Var),
    Transpose(Var),
    Relu(Var),
    Softmax(Var),
    Affine { x: Var, w: Var, b: Var },
    ConcatCols(Var, Var),
    ConcatRows(Vec<Var>),
    SelectRows { a: Var, rows: Vec<usize> },
    Gather { table: Var, ids: Vec<usize> },
    Add(Var, Var),
    Scale(Var, f64),
    LayerNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        xhat: Tensor,
        inv_std: Vec<f64>,
    },
    RowDot(Var, Var),
    BceLogits { logits: Var, targets: Vec<f64> },
    Sum(Var),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients produced by [`Tape::backward`], indexed by [`Var`].
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
    shapes: Vec<(usize, usize)>,
}

impl Gradients {
    /// `None` when the node did not receive any gradient flow.
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    /// Gradient of `v`, zero-filled when nothing flowed into it.
    pub fn get_or_zeros(&self, v: Var) -> Tensor {
        match self.get(v) {
            Some(g) => g.clone(),
            None => {
                let (r, c) = self.shapes[v.0];
                Tensor::zeros(r, c)
            }
        }
    }

    pub(crate) fn take(&mut self, v: Var) -> Option<Tensor> {
        self.grads.get_mut(v.0).and_then(Option::take)
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
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

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.nodes[v.0].value.shape()
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    /// Leaf that receives a gradient.
    pub fn param(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf, true)
    }

    /// Leaf that never receives a gradient.
    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf, false)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.cols() != bv.rows() {
            return Err(Error::shape("matmul", av.shape(), bv.shape()));
        }
        let mut out = Tensor::zeros(av.rows(), bv.cols());
        gemm_nn(av, bv, &mut out);
        let rg = self.rg(&[a, b]);
        Ok(self.push(out, Op::MatMul(a, b), rg))
    }

    /// `a · bᵀ`.
    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.cols() != bv.cols() {
            return Err(Error::shape("matmul_nt", av.shape(), bv.shape()));
        }
        let mut out = Tensor::zeros(av.rows(), bv.rows());
        gemm_nt(av, bv, &mut out);
        let rg = self.rg(&[a, b]);
        Ok(self.push(out, Op::MatMulNt(a, b), rg))
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let out = self.value(a).transpose();
        let rg = self.rg(&[a]);
        self.push(out, Op::Transpose(a), rg)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let mut out = self.value(a).clone();
        for v in out.data_mut() {
            if *v <= 0.0 {
                *v = 0.0;
            }
        }
        let rg = self.rg(&[a]);
        self.push(out, Op::Relu(a), rg)
    }

    /// Per-row softmax. Columns whose `mask` flag is false get probability
    /// exactly zero; the same mask applies to every row.
    pub fn row_softmax(&mut self, a: Var, mask: Option<&[bool]>) -> Result<Var> {
        let av = self.value(a);
        if let Some(m) = mask {
            if m.len() != av.cols() {
                return Err(Error::shape("row_softmax", av.shape(), (1, m.len())));
            }
        }
        let out = softmax_rows(av, mask)?;
        let rg = self.rg(&[a]);
        Ok(self.push(out, Op::Softmax(a), rg))
    }

    /// `x · wᵀ + b` with `b` (1×q) broadcast over rows.
    pub fn affine(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let (xv, wv, bv) = (self.value(x), self.value(w), self.value(b));
        if xv.cols() != wv.cols() {
            return Err(Error::shape("affine", xv.shape(), wv.shape()));
        }
        if bv.shape() != (1, wv.rows()) {
            return Err(Error::shape("affine bias", wv.shape(), bv.shape()));
        }
        let mut out = Tensor::zeros(xv.rows(), wv.rows());
        gemm_nt(xv, wv, &mut out);
        for r in 0..out.rows() {
            for (o, b) in out.row_mut(r).iter_mut().zip(bv.data()) {
                *o += b;
            }
        }
        let rg = self.rg(&[x, w, b]);
        Ok(self.push(out, Op::Affine { x, w, b }, rg))
    }

    pub fn concat_cols(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.rows() != bv.rows() {
            return Err(Error::shape("concat_cols", av.shape(), bv.shape()));
        }
        let (rows, p, q) = (av.rows(), av.cols(), bv.cols());
        let mut data = Vec::with_capacity(rows * (p + q));
        for r in 0..rows {
            data.extend_from_slice(av.row(r));
            data.extend_from_slice(bv.row(r));
        }
        let out = Tensor::new(rows, p + q, data)?;
        let rg = self.rg(&[a, b]);
        Ok(self.push(out, Op::ConcatCols(a, b), rg))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let Some(&first) = parts.first() else {
            return Err(Error::shape("concat_rows", (0, 0), (0, 0)));
        };
        let cols = self.value(first).cols();
        let mut data = Vec::new();
        let mut rows = 0;
        for &p in parts {
            let pv = self.value(p);
            if pv.cols() != cols {
                return Err(Error::shape("concat_rows", self.shape(first), pv.shape()));
            }
            rows += pv.rows();
            data.extend_from_slice(pv.data());
        }
        let out = Tensor::new(rows, cols, data)?;
        let rg = self.rg(parts);
        Ok(self.push(out, Op::ConcatRows(parts.to_vec()), rg))
    }

    /// Picks rows of `a` in the given order.
    pub fn select_rows(&mut self, a: Var, rows: &[usize]) -> Result<Var> {
        let av = self.value(a);
        let cols = av.cols();
        let mut data = Vec::with_capacity(rows.len() * cols);
        for &r in rows {
            if r >= av.rows() {
                return Err(Error::shape("select_rows", av.shape(), (r, cols)));
            }
            data.extend_from_slice(av.row(r));
        }
        let out = Tensor::new(rows.len(), cols, data)?;
        let rg = self.rg(&[a]);
        Ok(self.push(
            out,
            Op::SelectRows {
                a,
                rows: rows.to_vec(),
            },
            rg,
        ))
    }

    /// Embedding lookup: row `i` of the output is `table[ids[i]]`.
    pub fn gather(&mut self, table: Var, ids: &[usize]) -> Result<Var> {
        let tv = self.value(table);
        let cols = tv.cols();
        let mut data = Vec::with_capacity(ids.len() * cols);
        for (pos, &id) in ids.iter().enumerate() {
            if id >= tv.rows() {
                return Err(Error::OutOfVocab {
                    id,
                    position: pos,
                    vocab: tv.rows(),
                });
            }
            data.extend_from_slice(tv.row(id));
        }
        let out = Tensor::new(ids.len(), cols, data)?;
        let rg = self.rg(&[table]);
        Ok(self.push(
            out,
            Op::Gather {
                table,
                ids: ids.to_vec(),
            },
            rg,
        ))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.shape() != bv.shape() {
            return Err(Error::shape("add", av.shape(), bv.shape()));
        }
        let mut out = av.clone();
        out.add_assign(bv);
        let rg = self.rg(&[a, b]);
        Ok(self.push(out, Op::Add(a, b), rg))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let mut out = self.value(a).clone();
        out.scale_assign(s);
        let rg = self.rg(&[a]);
        self.push(out, Op::Scale(a, s), rg)
    }

    /// Row-wise layer normalization with learned `gamma` (scale) and `beta`
    /// (offset), both 1×cols.
    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var, eps: f64) -> Result<Var> {
        let (xv, gv, bv) = (self.value(x), self.value(gamma), self.value(beta));
        let d = xv.cols();
        if gv.shape() != (1, d) || bv.shape() != (1, d) {
            return Err(Error::shape("layer_norm", xv.shape(), gv.shape()));
        }
        let mut xhat = Tensor::zeros(xv.rows(), d);
        let mut inv_std = Vec::with_capacity(xv.rows());
        let mut out = Tensor::zeros(xv.rows(), d);
        for r in 0..xv.rows() {
            let row = xv.row(r);
            let mean = row.iter().sum::<f64>() / d as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
            let inv = 1.0 / (var + eps).sqrt();
            inv_std.push(inv);
            for (c, &v) in row.iter().enumerate() {
                let h = (v - mean) * inv;
                xhat.set(r, c, h);
                out.set(r, c, gv.data()[c] * h + bv.data()[c]);
            }
        }
        let rg = self.rg(&[x, gamma, beta]);
        Ok(self.push(
            out,
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
            },
            rg,
        ))
    }

    /// Row-wise dot products of two same-shape tensors, as a 1×rows vector.
    pub fn row_dot(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.shape() != bv.shape() {
            return Err(Error::shape("row_dot", av.shape(), bv.shape()));
        }
        let dots: Vec<f64> = (0..av.rows())
            .map(|r| av.row(r).iter().zip(bv.row(r)).map(|(x, y)| x * y).sum())
            .collect();
        let out = Tensor::row_vector(&dots);
        let rg = self.rg(&[a, b]);
        Ok(self.push(out, Op::RowDot(a, b), rg))
    }

    /// Summed binary cross-entropy of a 1×C logit row against 0/1 targets,
    /// evaluated as `softplus(x) - y·x` so no log of zero is ever taken.
    pub fn bce_with_logits(&mut self, logits: Var, targets: &[f64]) -> Result<Var> {
        let lv = self.value(logits);
        if lv.rows() != 1 || lv.cols() != targets.len() {
            return Err(Error::shape("bce_with_logits", lv.shape(), (1, targets.len())));
        }
        let loss: f64 = lv
            .data()
            .iter()
            .zip(targets)
            .map(|(&x, &y)| softplus(x) - y * x)
            .sum();
        let rg = self.rg(&[logits]);
        Ok(self.push(
            Tensor::full(1, 1, loss),
            Op::BceLogits {
                logits,
                targets: targets.to_vec(),
            },
            rg,
        ))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).sum();
        let rg = self.rg(&[a]);
        self.push(Tensor::full(1, 1, s), Op::Sum(a), rg)
    }

    /// Reverse pass from a 1×1 `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let lv = self.value(loss);
        if lv.shape() != (1, 1) {
            return Err(Error::NonScalarLoss {
                rows: lv.rows(),
                cols: lv.cols(),
            });
        }
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::full(1, 1, 1.0));

        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.propagate(node, &g, &mut grads);
            grads[i] = Some(g);
        }

        Ok(Gradients {
            grads,
            shapes: self.nodes.iter().map(|n| n.value.shape()).collect(),
        })
    }

    fn acc<'g>(&self, grads: &'g mut [Option<Tensor>], v: Var) -> &'g mut Tensor {
        let (r, c) = self.nodes[v.0].value.shape();
        grads[v.0].get_or_insert_with(|| Tensor::zeros(r, c))
    }

    fn wants(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn propagate(&self, node: &Node, g: &Tensor, grads: &mut [Option<Tensor>]) {
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                if self.wants(*a) {
                    gemm_nt(g, self.value(*b), self.acc(grads, *a));
                }
                if self.wants(*b) {
                    gemm_tn(self.value(*a), g, self.acc(grads, *b));
                }
            }
            Op::MatMulNt(a, b) => {
                if self.wants(*a) {
                    gemm_nn(g, self.value(*b), self.acc(grads, *a));
                }
                if self.wants(*b) {
                    gemm_tn(g, self.value(*a), self.acc(grads, *b));
                }
            }
            Op::Transpose(a) => {
                if self.wants(*a) {
                    self.acc(grads, *a).add_assign(&g.transpose());
                }
            }
            Op::Relu(a) => {
                if self.wants(*a) {
                    let x = self.value(*a);
                    let ga = self.acc(grads, *a);
                    for ((o, &gv), &xv) in ga.data_mut().iter_mut().zip(g.data()).zip(x.data()) {
                        if xv > 0.0 {
                            *o += gv;
                        }
                    }
                }
            }
            Op::Softmax(a) => {
                if self.wants(*a) {
                    let y = &node.value;
                    let ga = self.acc(grads, *a);
                    for r in 0..y.rows() {
                        let yr = y.row(r);
                        let gr = g.row(r);
                        let dot: f64 = yr.iter().zip(gr).map(|(p, q)| p * q).sum();
                        for (c, o) in ga.row_mut(r).iter_mut().enumerate() {
                            *o += yr[c] * (gr[c] - dot);
                        }
                    }
                }
            }
            Op::Affine { x, w, b } => {
                if self.wants(*x) {
                    gemm_nn(g, self.value(*w), self.acc(grads, *x));
                }
                if self.wants(*w) {
                    gemm_tn(g, self.value(*x), self.acc(grads, *w));
                }
                if self.wants(*b) {
                    let gb = self.acc(grads, *b);
                    for r in 0..g.rows() {
                        for (o, v) in gb.data_mut().iter_mut().zip(g.row(r)) {
                            *o += v;
                        }
                    }
                }
            }
            Op::ConcatCols(a, b) => {
                let p = self.value(*a).cols();
                if self.wants(*a) {
                    let ga = self.acc(grads, *a);
                    for r in 0..g.rows() {
                        for (o, v) in ga.row_mut(r).iter_mut().zip(&g.row(r)[..p]) {
                            *o += v;
                        }
                    }
                }
                if self.wants(*b) {
                    let gb = self.acc(grads, *b);
                    for r in 0..g.rows() {
                        for (o, v) in gb.row_mut(r).iter_mut().zip(&g.row(r)[p..]) {
                            *o += v;
                        }
                    }
                }
            }
            Op::ConcatRows(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let n = self.value(p).len();
                    if self.wants(p) {
                        let gp = self.acc(grads, p);
                        for (o, v) in gp.data_mut().iter_mut().zip(&g.data()[offset..offset + n]) {
                            *o += v;
                        }
                    }
                    offset += n;
                }
            }
            Op::SelectRows { a, rows } => {
                if self.wants(*a) {
                    let ga = self.acc(grads, *a);
                    for (i, &r) in rows.iter().enumerate() {
                        for (o, v) in ga.row_mut(r).iter_mut().zip(g.row(i)) {
                            *o += v;
                        }
                    }
                }
            }
            Op::Gather { table, ids } => {
                if self.wants(*table) {
                    let gt = self.acc(grads, *table);
                    for (i, &id) in ids.iter().enumerate() {
                        for (o, v) in gt.row_mut(id).iter_mut().zip(g.row(i)) {
                            *o += v;
                        }
                    }
                }
            }
            Op::Add(a, b) => {
                if self.wants(*a) {
                    self.acc(grads, *a).add_assign(g);
                }
                if self.wants(*b) {
                    self.acc(grads, *b).add_assign(g);
                }
            }
            Op::Scale(a, s) => {
                if self.wants(*a) {
                    let ga = self.acc(grads, *a);
                    for (o, v) in ga.data_mut().iter_mut().zip(g.data()) {
                        *o += s * v;
                    }
                }
            }
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
            } => {
                let d = xhat.cols();
                let gam = self.value(*gamma);
                if self.wants(*gamma) {
                    let gg = self.acc(grads, *gamma);
                    for r in 0..g.rows() {
                        for c in 0..d {
                            gg.data_mut()[c] += g.get(r, c) * xhat.get(r, c);
                        }
                    }
                }
                if self.wants(*beta) {
                    let gb = self.acc(grads, *beta);
                    for r in 0..g.rows() {
                        for (o, v) in gb.data_mut().iter_mut().zip(g.row(r)) {
                            *o += v;
                        }
                    }
                }
                if self.wants(*x) {
                    let gx = self.acc(grads, *x);
                    let nd = d as f64;
                    for (r, &inv) in inv_std.iter().enumerate() {
                        let dxhat: Vec<f64> =
                            (0..d).map(|c| g.get(r, c) * gam.data()[c]).collect();
                        let s1: f64 = dxhat.iter().sum();
                        let s2: f64 = dxhat.iter().zip(xhat.row(r)).map(|(a, b)| a * b).sum();
                        for (c, o) in gx.row_mut(r).iter_mut().enumerate() {
                            *o += inv / nd * (nd * dxhat[c] - s1 - xhat.get(r, c) * s2);
                        }
                    }
                }
            }
            Op::RowDot(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                if self.wants(*a) {
                    let ga = self.acc(grads, *a);
                    for r in 0..av.rows() {
                        let s = g.data()[r];
                        for (o, v) in ga.row_mut(r).iter_mut().zip(bv.row(r)) {
                            *o += s * v;
                        }
                    }
                }
                if self.wants(*b) {
                    let gb = self.acc(grads, *b);
                    for r in 0..bv.rows() {
                        let s = g.data()[r];
                        for (o, v) in gb.row_mut(r).iter_mut().zip(av.row(r)) {
                            *o += s * v;
                        }
                    }
                }
            }
            Op::BceLogits { logits, targets } => {
                if self.wants(*logits) {
                    let s = g.data()[0];
                    let lv = self.value(*logits);
                    let gl = self.acc(grads, *logits);
                    for ((o, &x), &y) in gl.data_mut().iter_mut().zip(lv.data()).zip(targets) {
                        *o += s * (sigmoid(x) - y);
                    }
                }
            }
            Op::Sum(a) => {
                if self.wants(*a) {
                    let s = g.data()[0];
                    for o in self.acc(grads, *a).data_mut() {
                        *o += s;
                    }
                }
            }
        }
    }
}

pub(crate) fn softmax_rows(a: &Tensor, mask: Option<&[bool]>) -> Result<Tensor> {
    let mut out = Tensor::zeros(a.rows(), a.cols());
    let valid = |c: usize| mask.is_none_or(|m| m[c]);
    for r in 0..a.rows() {
        let row = a.row(r);
        let max = (0..a.cols())
            .filter(|&c| valid(c))
            .map(|c| row[c])
            .fold(f64::NEG_INFINITY, f64::max);
        if max == f64::NEG_INFINITY {
            if (0..a.cols()).any(valid) {
                return Err(Error::NonFinite(format!("softmax row {r} has no finite entry")));
            }
            return Err(Error::EmptyAttention { row: r });
        }
        let orow = out.row_mut(r);
        let mut z = 0.0;
        for c in 0..row.len() {
            if valid(c) {
                let e = (row[c] - max).exp();
                orow[c] = e;
                z += e;
            }
        }
        for v in orow.iter_mut() {
            *v /= z;
        }
    }
    Ok(out)
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^x)` without overflow.
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}
