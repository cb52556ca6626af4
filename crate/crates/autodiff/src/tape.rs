use std::sync::Arc;

use crate::error::{Result, TensorError};
use crate::tensor::{broadcast_shape, broadcast_source_index, Tensor};

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(pub(crate) usize);

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Add,
    Sub,
    Mul,
    Div,
    Minimum,
    Maximum,
    Neg,
    Scale(f64),
    AddScalar,
    Abs,
    Relu,
    Exp,
    Ln,
    Sqrt,
    Sigmoid,
    LogSigmoid,
    Silu,
    Sin,
    Cos,
    Logit { eps: f64 },
    MatMul,
    Transpose2,
    Reshape,
    Softmax { axis: usize },
    LayerNorm { eps: f64 },
    Sum,
    Mean,
    SumAxis { axis: usize },
    Gather { indices: Arc<Vec<i64>> },
    Concat { axis: usize },
    BilinearSample,
}

struct Node {
    op: Op,
    inputs: Vec<Var>,
}

/// Records every tensor operation so that [`Tape::backward`] can replay the
/// graph in reverse. Single-threaded by construction; all forward results are
/// checked finite so NaN/Inf surfaces as an error at the op that produced it.
pub struct Tape {
    nodes: Vec<Node>,
    values: Vec<Tensor>,
    requires: Vec<bool>,
    is_leaf: Vec<bool>,
    leaf_grads: Vec<Option<Vec<f64>>>,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            values: Vec::new(),
            requires: Vec::new(),
            is_leaf: Vec::new(),
            leaf_grads: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Register a leaf tensor. Gradients accumulate across backward calls
    /// until [`Tape::clear_grads`].
    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Var {
        let id = self.nodes.len();
        self.nodes.push(Node {
            op: Op::Leaf,
            inputs: vec![],
        });
        self.values.push(value);
        self.requires.push(requires_grad);
        self.is_leaf.push(true);
        self.leaf_grads.push(None);
        Var(id)
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.leaf(value, false)
    }

    pub fn scalar(&mut self, value: f64) -> Var {
        self.constant(Tensor::scalar(value))
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.values[v.0]
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.values[v.0].shape()
    }

    /// Accumulated gradient of a leaf, if any backward pass has reached it.
    pub fn grad(&self, v: Var) -> Option<Tensor> {
        self.leaf_grads[v.0]
            .as_ref()
            .map(|g| Tensor::new(self.values[v.0].shape().to_vec(), g.clone()).expect("grad shape"))
    }

    pub fn clear_grads(&mut self) {
        for g in &mut self.leaf_grads {
            *g = None;
        }
    }

    fn push(&mut self, op: Op, inputs: Vec<Var>, value: Tensor, op_name: &'static str) -> Result<Var> {
        if !value.all_finite() {
            return Err(TensorError::NonFinite { op: op_name });
        }
        let requires = inputs.iter().any(|v| self.requires[v.0]);
        let id = self.nodes.len();
        self.nodes.push(Node { op, inputs });
        self.values.push(value);
        self.requires.push(requires);
        self.is_leaf.push(false);
        self.leaf_grads.push(None);
        Ok(Var(id))
    }

    // ── elementwise binary ops (trailing-dim broadcasting) ──────────────

    fn binary(
        &mut self,
        op: Op,
        name: &'static str,
        a: Var,
        b: Var,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<Var> {
        let (sa, sb) = (self.values[a.0].shape(), self.values[b.0].shape());
        let out_shape = broadcast_shape(sa, sb).ok_or(TensorError::ShapeMismatch {
            op: name,
            lhs: sa.to_vec(),
            rhs: sb.to_vec(),
        })?;
        let numel: usize = out_shape.iter().product();
        let (da, db) = (self.values[a.0].data(), self.values[b.0].data());
        let (sa, sb) = (sa.to_vec(), sb.to_vec());
        let mut out = Vec::with_capacity(numel);
        for i in 0..numel {
            let ia = broadcast_source_index(i, &out_shape, &sa);
            let ib = broadcast_source_index(i, &out_shape, &sb);
            out.push(f(da[ia], db[ib]));
        }
        self.push(op, vec![a, b], Tensor::new(out_shape, out)?, name)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(Op::Add, "add", a, b, |x, y| x + y)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(Op::Sub, "sub", a, b, |x, y| x - y)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(Op::Mul, "mul", a, b, |x, y| x * y)
    }

    pub fn div(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(Op::Div, "div", a, b, |x, y| x / y)
    }

    pub fn minimum(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(Op::Minimum, "minimum", a, b, f64::min)
    }

    pub fn maximum(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(Op::Maximum, "maximum", a, b, f64::max)
    }

    // ── elementwise unary ops ────────────────────────────────────────────

    fn unary(&mut self, op: Op, name: &'static str, a: Var, f: impl Fn(f64) -> f64) -> Result<Var> {
        let t = &self.values[a.0];
        let out = Tensor::new(t.shape().to_vec(), t.data().iter().map(|&x| f(x)).collect())?;
        self.push(op, vec![a], out, name)
    }

    pub fn neg(&mut self, a: Var) -> Result<Var> {
        self.unary(Op::Neg, "neg", a, |x| -x)
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Result<Var> {
        self.unary(Op::Scale(c), "scale", a, |x| c * x)
    }

    pub fn add_scalar(&mut self, a: Var, c: f64) -> Result<Var> {
        self.unary(Op::AddScalar, "add_scalar", a, |x| x + c)
    }

    pub fn abs(&mut self, a: Var) -> Result<Var> {
        self.unary(Op::Abs, "abs", a, f64::abs)
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        self.unary(Op::Relu, "relu", a, |x| x.max(0.0))
    }

    pub fn exp(&mut self, a: Var) -> Result<Var> {
        self.unary(Op::Exp, "exp", a, f64::exp)
    }

    pub fn ln(&mut self, a: Var) -> Result<Var> {
        self.unary(Op::Ln, "ln", a, f64::ln)
    }

    pub fn sqrt(&mut self, a: Var) -> Result<Var> {
        self.unary(Op::Sqrt, "sqrt", a, f64::sqrt)
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        self.unary(Op::Sigmoid, "sigmoid", a, sigmoid)
    }

    pub fn log_sigmoid(&mut self, a: Var) -> Result<Var> {
        self.unary(Op::LogSigmoid, "log_sigmoid", a, log_sigmoid)
    }

    pub fn silu(&mut self, a: Var) -> Result<Var> {
        self.unary(Op::Silu, "silu", a, |x| x * sigmoid(x))
    }

    pub fn sin(&mut self, a: Var) -> Result<Var> {
        self.unary(Op::Sin, "sin", a, f64::sin)
    }

    pub fn cos(&mut self, a: Var) -> Result<Var> {
        self.unary(Op::Cos, "cos", a, f64::cos)
    }

    /// Inverse sigmoid with clamping to keep the output finite.
    pub fn logit(&mut self, a: Var, eps: f64) -> Result<Var> {
        self.unary(Op::Logit { eps }, "logit", a, move |p| {
            let p = p.clamp(eps, 1.0 - eps);
            (p / (1.0 - p)).ln()
        })
    }

    // ── linear algebra ───────────────────────────────────────────────────

    /// Batched matrix product `[.., m, k] x [.., k, n] -> [.., m, n]` with
    /// broadcasting over the batch dims.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let sa = self.values[a.0].shape().to_vec();
        let sb = self.values[b.0].shape().to_vec();
        let mismatch = || TensorError::ShapeMismatch {
            op: "matmul",
            lhs: sa.clone(),
            rhs: sb.clone(),
        };
        if sa.len() < 2 || sb.len() < 2 {
            return Err(mismatch());
        }
        let (m, ka) = (sa[sa.len() - 2], sa[sa.len() - 1]);
        let (kb, n) = (sb[sb.len() - 2], sb[sb.len() - 1]);
        if ka != kb {
            return Err(mismatch());
        }
        let batch_a = &sa[..sa.len() - 2];
        let batch_b = &sb[..sb.len() - 2];
        let batch = broadcast_shape(batch_a, batch_b).ok_or_else(mismatch)?;
        let n_batch: usize = batch.iter().product();

        let da = self.values[a.0].data();
        let db = self.values[b.0].data();
        let mut out = vec![0.0; n_batch * m * n];
        for bi in 0..n_batch {
            let oa = broadcast_source_index(bi, &batch, batch_a) * m * ka;
            let ob = broadcast_source_index(bi, &batch, batch_b) * kb * n;
            let oc = bi * m * n;
            matmul_2d(&da[oa..oa + m * ka], &db[ob..ob + kb * n], &mut out[oc..oc + m * n], m, ka, n);
        }
        let mut out_shape = batch;
        out_shape.push(m);
        out_shape.push(n);
        self.push(Op::MatMul, vec![a, b], Tensor::new(out_shape, out)?, "matmul")
    }

    /// Swap the last two axes.
    pub fn transpose2(&mut self, a: Var) -> Result<Var> {
        let s = self.values[a.0].shape().to_vec();
        if s.len() < 2 {
            return Err(TensorError::ShapeMismatch {
                op: "transpose2",
                lhs: s,
                rhs: vec![],
            });
        }
        let out = transpose_last2(&self.values[a.0]);
        self.push(Op::Transpose2, vec![a], out, "transpose2")
    }

    pub fn reshape(&mut self, a: Var, shape: Vec<usize>) -> Result<Var> {
        let t = self.values[a.0].clone().reshaped(shape)?;
        self.push(Op::Reshape, vec![a], t, "reshape")
    }

    // ── normalization ────────────────────────────────────────────────────

    /// Numerically stabilized softmax along `axis`.
    pub fn softmax(&mut self, a: Var, axis: usize) -> Result<Var> {
        let t = &self.values[a.0];
        let shape = t.shape().to_vec();
        if axis >= shape.len() {
            return Err(TensorError::InvalidAxis { axis, shape });
        }
        let out = softmax_forward(t, axis);
        self.push(Op::Softmax { axis }, vec![a], out, "softmax")
    }

    /// Layer normalization over the last axis with affine parameters.
    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var, eps: f64) -> Result<Var> {
        let shape = self.values[x.0].shape().to_vec();
        let n = *shape.last().ok_or(TensorError::InvalidAxis {
            axis: 0,
            shape: shape.clone(),
        })?;
        for p in [gamma, beta] {
            if self.values[p.0].shape() != [n] {
                return Err(TensorError::ShapeMismatch {
                    op: "layer_norm",
                    lhs: shape,
                    rhs: self.values[p.0].shape().to_vec(),
                });
            }
        }
        if eps <= 0.0 {
            return Err(TensorError::Config("layer_norm eps must be > 0".into()));
        }
        let out = layer_norm_forward(
            &self.values[x.0],
            self.values[gamma.0].data(),
            self.values[beta.0].data(),
            eps,
        );
        self.push(Op::LayerNorm { eps }, vec![x, gamma, beta], out, "layer_norm")
    }

    // ── reductions ───────────────────────────────────────────────────────

    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let s: f64 = self.values[a.0].data().iter().sum();
        self.push(Op::Sum, vec![a], Tensor::scalar(s), "sum")
    }

    pub fn mean(&mut self, a: Var) -> Result<Var> {
        let t = &self.values[a.0];
        let s: f64 = t.data().iter().sum();
        let n = t.numel().max(1) as f64;
        self.push(Op::Mean, vec![a], Tensor::scalar(s / n), "mean")
    }

    pub fn sum_axis(&mut self, a: Var, axis: usize) -> Result<Var> {
        let t = &self.values[a.0];
        let shape = t.shape().to_vec();
        if axis >= shape.len() {
            return Err(TensorError::InvalidAxis { axis, shape });
        }
        let (outer, len, inner) = axis_split(&shape, axis);
        let mut out_shape = shape.clone();
        out_shape.remove(axis);
        let mut out = vec![0.0; outer * inner];
        let data = t.data();
        for o in 0..outer {
            for l in 0..len {
                for i in 0..inner {
                    out[o * inner + i] += data[(o * len + l) * inner + i];
                }
            }
        }
        self.push(Op::SumAxis { axis }, vec![a], Tensor::new(out_shape, out)?, "sum_axis")
    }

    // ── indexing / structure ─────────────────────────────────────────────

    /// Flat reindex: `out[i] = a.data[indices[i]]`, with `-1` producing 0.0.
    pub fn gather(&mut self, a: Var, indices: Arc<Vec<i64>>, out_shape: Vec<usize>) -> Result<Var> {
        let numel: usize = out_shape.iter().product();
        if numel != indices.len() {
            return Err(TensorError::ShapeDataMismatch {
                shape: out_shape,
                len: indices.len(),
            });
        }
        let data = self.values[a.0].data();
        let mut out = Vec::with_capacity(numel);
        for &ix in indices.iter() {
            if ix < 0 {
                out.push(0.0);
            } else {
                let ix = ix as usize;
                if ix >= data.len() {
                    return Err(TensorError::IndexOutOfBounds {
                        op: "gather",
                        index: ix,
                        len: data.len(),
                    });
                }
                out.push(data[ix]);
            }
        }
        self.push(Op::Gather { indices }, vec![a], Tensor::new(out_shape, out)?, "gather")
    }

    /// Select whole rows of a 2-D tensor.
    pub fn gather_rows(&mut self, a: Var, rows: &[usize]) -> Result<Var> {
        let shape = self.values[a.0].shape().to_vec();
        if shape.len() != 2 {
            return Err(TensorError::ShapeMismatch {
                op: "gather_rows",
                lhs: shape,
                rhs: vec![],
            });
        }
        let d = shape[1];
        let mut idx = Vec::with_capacity(rows.len() * d);
        for &r in rows {
            for c in 0..d {
                idx.push((r * d + c) as i64);
            }
        }
        self.gather(a, Arc::new(idx), vec![rows.len(), d])
    }

    /// Select a contiguous column range of a 2-D tensor.
    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let shape = self.values[a.0].shape().to_vec();
        if shape.len() != 2 || start + len > shape[1] {
            return Err(TensorError::ShapeMismatch {
                op: "slice_cols",
                lhs: shape,
                rhs: vec![start, len],
            });
        }
        let (n, d) = (shape[0], shape[1]);
        let mut idx = Vec::with_capacity(n * len);
        for r in 0..n {
            for c in start..start + len {
                idx.push((r * d + c) as i64);
            }
        }
        self.gather(a, Arc::new(idx), vec![n, len])
    }

    pub fn concat(&mut self, parts: &[Var], axis: usize) -> Result<Var> {
        if parts.is_empty() {
            return Err(TensorError::Config("concat of zero tensors".into()));
        }
        let first = self.values[parts[0].0].shape().to_vec();
        if axis >= first.len() {
            return Err(TensorError::InvalidAxis { axis, shape: first });
        }
        let mut axis_total = 0usize;
        for p in parts {
            let s = self.values[p.0].shape();
            if s.len() != first.len()
                || s.iter().zip(&first).enumerate().any(|(i, (a, b))| i != axis && a != b)
            {
                return Err(TensorError::ShapeMismatch {
                    op: "concat",
                    lhs: first,
                    rhs: s.to_vec(),
                });
            }
            axis_total += s[axis];
        }
        let mut out_shape = first.clone();
        out_shape[axis] = axis_total;
        let (outer, _, inner) = axis_split(&out_shape, axis);
        let mut out = vec![0.0; outer * axis_total * inner];
        let mut offset = 0usize;
        for p in parts {
            let t = &self.values[p.0];
            let len = t.shape()[axis];
            let data = t.data();
            for o in 0..outer {
                for l in 0..len {
                    let src = (o * len + l) * inner;
                    let dst = (o * axis_total + offset + l) * inner;
                    out[dst..dst + inner].copy_from_slice(&data[src..src + inner]);
                }
            }
            offset += len;
        }
        self.push(Op::Concat { axis }, parts.to_vec(), Tensor::new(out_shape, out)?, "concat")
    }

    /// Bilinear interpolation of `map [C,H,W]` at continuous pixel
    /// coordinates `points [N,2]` (x, y). Out-of-bounds reads zero padding.
    /// Gradients flow to both the map and the point coordinates.
    pub fn bilinear_sample(&mut self, map: Var, points: Var) -> Result<Var> {
        let ms = self.values[map.0].shape().to_vec();
        let ps = self.values[points.0].shape().to_vec();
        if ms.len() != 3 || ps.len() != 2 || ps[1] != 2 {
            return Err(TensorError::ShapeMismatch {
                op: "bilinear_sample",
                lhs: ms,
                rhs: ps,
            });
        }
        let (c, h, w) = (ms[0], ms[1], ms[2]);
        let n = ps[0];
        let md = self.values[map.0].data();
        let pd = self.values[points.0].data();
        let mut out = vec![0.0; c * n];
        for i in 0..n {
            let (x, y) = (pd[2 * i], pd[2 * i + 1]);
            let x0 = x.floor();
            let y0 = y.floor();
            let (fx, fy) = (x - x0, y - y0);
            let (x0, y0) = (x0 as i64, y0 as i64);
            let corners = [
                (x0, y0, (1.0 - fx) * (1.0 - fy)),
                (x0 + 1, y0, fx * (1.0 - fy)),
                (x0, y0 + 1, (1.0 - fx) * fy),
                (x0 + 1, y0 + 1, fx * fy),
            ];
            for (cx, cy, wgt) in corners {
                if cx < 0 || cy < 0 || cx >= w as i64 || cy >= h as i64 {
                    continue;
                }
                let base = cy as usize * w + cx as usize;
                for ch in 0..c {
                    out[ch * n + i] += wgt * md[ch * h * w + base];
                }
            }
        }
        self.push(
            Op::BilinearSample,
            vec![map, points],
            Tensor::new(vec![c, n], out)?,
            "bilinear_sample",
        )
    }

    // ── backward ─────────────────────────────────────────────────────────

    /// Reverse-mode sweep from a scalar loss. Leaf gradients accumulate
    /// across repeated calls until [`Tape::clear_grads`].
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if !self.values[loss.0].is_scalar() {
            return Err(TensorError::NonScalarLoss {
                shape: self.values[loss.0].shape().to_vec(),
            });
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(vec![1.0]);

        for id in (0..=loss.0).rev() {
            if !self.requires[id] {
                continue;
            }
            let g = match grads[id].take() {
                Some(g) => g,
                None => continue,
            };
            if self.is_leaf[id] {
                match &mut self.leaf_grads[id] {
                    Some(acc) => {
                        for (a, b) in acc.iter_mut().zip(&g) {
                            *a += b;
                        }
                    }
                    None => self.leaf_grads[id] = Some(g),
                }
                continue;
            }
            self.backprop_node(id, &g, &mut grads);
        }
        Ok(())
    }

    fn accumulate(&self, grads: &mut [Option<Vec<f64>>], v: Var, contribution: &[f64]) {
        if !self.requires[v.0] {
            return;
        }
        match &mut grads[v.0] {
            Some(acc) => {
                for (a, b) in acc.iter_mut().zip(contribution) {
                    *a += b;
                }
            }
            slot @ None => *slot = Some(contribution.to_vec()),
        }
    }

    fn backprop_node(&mut self, id: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        // Split borrows: clone the small bits we need up front.
        let op = self.nodes[id].op.clone();
        let inputs = self.nodes[id].inputs.clone();
        let out_shape = self.values[id].shape().to_vec();

        match op {
            Op::Leaf => {}
            Op::Add | Op::Sub => {
                let sign = if matches!(op, Op::Sub) { -1.0 } else { 1.0 };
                let ga = reduce_to_shape(g, &out_shape, self.values[inputs[0].0].shape());
                self.accumulate(grads, inputs[0], &ga);
                let mut gb = reduce_to_shape(g, &out_shape, self.values[inputs[1].0].shape());
                if sign < 0.0 {
                    gb.iter_mut().for_each(|x| *x = -*x);
                }
                self.accumulate(grads, inputs[1], &gb);
            }
            Op::Mul | Op::Div | Op::Minimum | Op::Maximum => {
                let (a, b) = (inputs[0], inputs[1]);
                let sa = self.values[a.0].shape().to_vec();
                let sb = self.values[b.0].shape().to_vec();
                let da = self.values[a.0].data();
                let db = self.values[b.0].data();
                let mut full_a = vec![0.0; g.len()];
                let mut full_b = vec![0.0; g.len()];
                for i in 0..g.len() {
                    let ia = broadcast_source_index(i, &out_shape, &sa);
                    let ib = broadcast_source_index(i, &out_shape, &sb);
                    let (x, y) = (da[ia], db[ib]);
                    let (dx, dy) = match op {
                        Op::Mul => (y, x),
                        Op::Div => (1.0 / y, -x / (y * y)),
                        // On exact ties the subgradient is split evenly.
                        Op::Minimum => match x.partial_cmp(&y) {
                            Some(std::cmp::Ordering::Less) => (1.0, 0.0),
                            Some(std::cmp::Ordering::Greater) => (0.0, 1.0),
                            _ => (0.5, 0.5),
                        },
                        Op::Maximum => match x.partial_cmp(&y) {
                            Some(std::cmp::Ordering::Greater) => (1.0, 0.0),
                            Some(std::cmp::Ordering::Less) => (0.0, 1.0),
                            _ => (0.5, 0.5),
                        },
                        _ => unreachable!(),
                    };
                    full_a[i] = g[i] * dx;
                    full_b[i] = g[i] * dy;
                }
                let ga = reduce_to_shape(&full_a, &out_shape, &sa);
                let gb = reduce_to_shape(&full_b, &out_shape, &sb);
                self.accumulate(grads, a, &ga);
                self.accumulate(grads, b, &gb);
            }
            Op::Neg => {
                let ga: Vec<f64> = g.iter().map(|x| -x).collect();
                self.accumulate(grads, inputs[0], &ga);
            }
            Op::Scale(c) => {
                let ga: Vec<f64> = g.iter().map(|x| c * x).collect();
                self.accumulate(grads, inputs[0], &ga);
            }
            Op::AddScalar => {
                self.accumulate(grads, inputs[0], g);
            }
            Op::Abs => {
                let x = self.values[inputs[0].0].data();
                let ga: Vec<f64> = g
                    .iter()
                    .zip(x)
                    .map(|(gi, xi)| gi * if *xi >= 0.0 { 1.0 } else { -1.0 })
                    .collect();
                self.accumulate(grads, inputs[0], &ga);
            }
            Op::Relu => {
                let x = self.values[inputs[0].0].data();
                let ga: Vec<f64> = g
                    .iter()
                    .zip(x)
                    .map(|(gi, xi)| if *xi > 0.0 { *gi } else { 0.0 })
                    .collect();
                self.accumulate(grads, inputs[0], &ga);
            }
            Op::Exp => {
                let y = self.values[id].data();
                let ga: Vec<f64> = g.iter().zip(y).map(|(gi, yi)| gi * yi).collect();
                self.accumulate(grads, inputs[0], &ga);
            }
            Op::Ln => {
                let x = self.values[inputs[0].0].data();
                let ga: Vec<f64> = g.iter().zip(x).map(|(gi, xi)| gi / xi).collect();
                self.accumulate(grads, inputs[0], &ga);
            }
            Op::Sqrt => {
                let y = self.values[id].data();
                let ga: Vec<f64> = g.iter().zip(y).map(|(gi, yi)| gi / (2.0 * yi)).collect();
                self.accumulate(grads, inputs[0], &ga);
            }
            Op::Sigmoid => {
                let y = self.values[id].data();
                let ga: Vec<f64> = g.iter().zip(y).map(|(gi, yi)| gi * yi * (1.0 - yi)).collect();
                self.accumulate(grads, inputs[0], &ga);
            }
            Op::LogSigmoid => {
                let x = self.values[inputs[0].0].data();
                let ga: Vec<f64> = g.iter().zip(x).map(|(gi, xi)| gi * sigmoid(-xi)).collect();
                self.accumulate(grads, inputs[0], &ga);
            }
            Op::Silu => {
                let x = self.values[inputs[0].0].data();
                let ga: Vec<f64> = g
                    .iter()
                    .zip(x)
                    .map(|(gi, xi)| {
                        let s = sigmoid(*xi);
                        gi * (s + xi * s * (1.0 - s))
                    })
                    .collect();
                self.accumulate(grads, inputs[0], &ga);
            }
            Op::Sin => {
                let x = self.values[inputs[0].0].data();
                let ga: Vec<f64> = g.iter().zip(x).map(|(gi, xi)| gi * xi.cos()).collect();
                self.accumulate(grads, inputs[0], &ga);
            }
            Op::Cos => {
                let x = self.values[inputs[0].0].data();
                let ga: Vec<f64> = g.iter().zip(x).map(|(gi, xi)| -gi * xi.sin()).collect();
                self.accumulate(grads, inputs[0], &ga);
            }
            Op::Logit { eps } => {
                let x = self.values[inputs[0].0].data();
                let ga: Vec<f64> = g
                    .iter()
                    .zip(x)
                    .map(|(gi, xi)| {
                        if *xi < eps || *xi > 1.0 - eps {
                            0.0
                        } else {
                            gi / (xi * (1.0 - xi))
                        }
                    })
                    .collect();
                self.accumulate(grads, inputs[0], &ga);
            }
            Op::MatMul => {
                self.backprop_matmul(id, g, grads);
            }
            Op::Transpose2 => {
                let gt = Tensor::new(out_shape.clone(), g.to_vec()).expect("grad shape");
                let ga = transpose_last2(&gt);
                self.accumulate(grads, inputs[0], ga.data());
            }
            Op::Reshape => {
                self.accumulate(grads, inputs[0], g);
            }
            Op::Softmax { axis } => {
                let y = self.values[id].data();
                let (outer, len, inner) = axis_split(&out_shape, axis);
                let mut ga = vec![0.0; g.len()];
                for o in 0..outer {
                    for i in 0..inner {
                        let mut dot = 0.0;
                        for l in 0..len {
                            let ix = (o * len + l) * inner + i;
                            dot += y[ix] * g[ix];
                        }
                        for l in 0..len {
                            let ix = (o * len + l) * inner + i;
                            ga[ix] = y[ix] * (g[ix] - dot);
                        }
                    }
                }
                self.accumulate(grads, inputs[0], &ga);
            }
            Op::LayerNorm { eps } => {
                self.backprop_layer_norm(id, g, grads, eps);
            }
            Op::Sum => {
                let n = self.values[inputs[0].0].numel();
                let ga = vec![g[0]; n];
                self.accumulate(grads, inputs[0], &ga);
            }
            Op::Mean => {
                let n = self.values[inputs[0].0].numel().max(1);
                let ga = vec![g[0] / n as f64; n];
                self.accumulate(grads, inputs[0], &ga);
            }
            Op::SumAxis { axis } => {
                let in_shape = self.values[inputs[0].0].shape().to_vec();
                let (outer, len, inner) = axis_split(&in_shape, axis);
                let mut ga = vec![0.0; outer * len * inner];
                for o in 0..outer {
                    for l in 0..len {
                        for i in 0..inner {
                            ga[(o * len + l) * inner + i] = g[o * inner + i];
                        }
                    }
                }
                self.accumulate(grads, inputs[0], &ga);
            }
            Op::Gather { indices } => {
                let n = self.values[inputs[0].0].numel();
                let mut ga = vec![0.0; n];
                for (gi, &ix) in g.iter().zip(indices.iter()) {
                    if ix >= 0 {
                        ga[ix as usize] += gi;
                    }
                }
                self.accumulate(grads, inputs[0], &ga);
            }
            Op::Concat { axis } => {
                let (outer, total, inner) = axis_split(&out_shape, axis);
                let mut offset = 0usize;
                for p in &inputs {
                    let s = self.values[p.0].shape();
                    let len = s[axis];
                    let mut gp = vec![0.0; outer * len * inner];
                    for o in 0..outer {
                        for l in 0..len {
                            let src = (o * total + offset + l) * inner;
                            let dst = (o * len + l) * inner;
                            gp[dst..dst + inner].copy_from_slice(&g[src..src + inner]);
                        }
                    }
                    offset += len;
                    self.accumulate(grads, *p, &gp);
                }
            }
            Op::BilinearSample => {
                self.backprop_bilinear(id, g, grads);
            }
        }
    }

    fn backprop_matmul(&mut self, id: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let (a, b) = (self.nodes[id].inputs[0], self.nodes[id].inputs[1]);
        let sa = self.values[a.0].shape().to_vec();
        let sb = self.values[b.0].shape().to_vec();
        let so = self.values[id].shape().to_vec();
        let (m, k) = (sa[sa.len() - 2], sa[sa.len() - 1]);
        let n = sb[sb.len() - 1];
        let batch = &so[..so.len() - 2];
        let n_batch: usize = batch.iter().product();
        let batch_a = &sa[..sa.len() - 2];
        let batch_b = &sb[..sb.len() - 2];

        let da = self.values[a.0].data();
        let db = self.values[b.0].data();
        let mut ga = vec![0.0; da.len()];
        let mut gb = vec![0.0; db.len()];
        for bi in 0..n_batch {
            let oa = broadcast_source_index(bi, batch, batch_a) * m * k;
            let ob = broadcast_source_index(bi, batch, batch_b) * k * n;
            let og = bi * m * n;
            // dA += dC @ B^T ; dB += A^T @ dC
            for i in 0..m {
                for p in 0..k {
                    let mut s = 0.0;
                    for j in 0..n {
                        s += g[og + i * n + j] * db[ob + p * n + j];
                    }
                    ga[oa + i * k + p] += s;
                }
            }
            for p in 0..k {
                for j in 0..n {
                    let mut s = 0.0;
                    for i in 0..m {
                        s += da[oa + i * k + p] * g[og + i * n + j];
                    }
                    gb[ob + p * n + j] += s;
                }
            }
        }
        self.accumulate(grads, a, &ga);
        self.accumulate(grads, b, &gb);
    }

    fn backprop_layer_norm(&mut self, id: usize, g: &[f64], grads: &mut [Option<Vec<f64>>], eps: f64) {
        let inputs = self.nodes[id].inputs.clone();
        let (x, gamma, _beta) = (inputs[0], inputs[1], inputs[2]);
        let xs = self.values[x.0].shape().to_vec();
        let n = *xs.last().unwrap();
        let rows = self.values[x.0].numel() / n;
        let xd = self.values[x.0].data();
        let gd = self.values[gamma.0].data();

        let mut gx = vec![0.0; xd.len()];
        let mut ggamma = vec![0.0; n];
        let mut gbeta = vec![0.0; n];
        for r in 0..rows {
            let row = &xd[r * n..(r + 1) * n];
            let grow = &g[r * n..(r + 1) * n];
            let mean = row.iter().sum::<f64>() / n as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
            let inv_std = 1.0 / (var + eps).sqrt();
            let xhat: Vec<f64> = row.iter().map(|v| (v - mean) * inv_std).collect();

            let dxhat: Vec<f64> = grow.iter().zip(gd).map(|(gi, gm)| gi * gm).collect();
            let mean_dxhat = dxhat.iter().sum::<f64>() / n as f64;
            let mean_dxhat_xhat = dxhat.iter().zip(&xhat).map(|(a, b)| a * b).sum::<f64>() / n as f64;
            for i in 0..n {
                gx[r * n + i] = inv_std * (dxhat[i] - mean_dxhat - xhat[i] * mean_dxhat_xhat);
                ggamma[i] += grow[i] * xhat[i];
                gbeta[i] += grow[i];
            }
        }
        self.accumulate(grads, x, &gx);
        self.accumulate(grads, gamma, &ggamma);
        self.accumulate(grads, inputs[2], &gbeta);
    }

    fn backprop_bilinear(&mut self, id: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let (map, points) = (self.nodes[id].inputs[0], self.nodes[id].inputs[1]);
        let ms = self.values[map.0].shape().to_vec();
        let (c, h, w) = (ms[0], ms[1], ms[2]);
        let n = self.values[points.0].shape()[0];
        let md = self.values[map.0].data();
        let pd = self.values[points.0].data();

        let mut gmap = vec![0.0; md.len()];
        let mut gpts = vec![0.0; 2 * n];
        for i in 0..n {
            let (x, y) = (pd[2 * i], pd[2 * i + 1]);
            let xf = x.floor();
            let yf = y.floor();
            let (fx, fy) = (x - xf, y - yf);
            let (x0, y0) = (xf as i64, yf as i64);
            let read = |cx: i64, cy: i64, ch: usize| -> f64 {
                if cx < 0 || cy < 0 || cx >= w as i64 || cy >= h as i64 {
                    0.0
                } else {
                    md[ch * h * w + cy as usize * w + cx as usize]
                }
            };
            for ch in 0..c {
                let go = g[ch * n + i];
                if go == 0.0 {
                    continue;
                }
                let m00 = read(x0, y0, ch);
                let m10 = read(x0 + 1, y0, ch);
                let m01 = read(x0, y0 + 1, ch);
                let m11 = read(x0 + 1, y0 + 1, ch);
                // map gradient
                let corners = [
                    (x0, y0, (1.0 - fx) * (1.0 - fy)),
                    (x0 + 1, y0, fx * (1.0 - fy)),
                    (x0, y0 + 1, (1.0 - fx) * fy),
                    (x0 + 1, y0 + 1, fx * fy),
                ];
                for (cx, cy, wgt) in corners {
                    if cx >= 0 && cy >= 0 && cx < w as i64 && cy < h as i64 {
                        gmap[ch * h * w + cy as usize * w + cx as usize] += go * wgt;
                    }
                }
                // coordinate gradient
                gpts[2 * i] += go * ((1.0 - fy) * (m10 - m00) + fy * (m11 - m01));
                gpts[2 * i + 1] += go * ((1.0 - fx) * (m01 - m00) + fx * (m11 - m10));
            }
        }
        self.accumulate(grads, map, &gmap);
        self.accumulate(grads, points, &gpts);
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub(crate) fn log_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        -(-x).exp().ln_1p()
    } else {
        x - x.exp().ln_1p()
    }
}

fn matmul_2d(a: &[f64], b: &[f64], out: &mut [f64], m: usize, k: usize, n: usize) {
    for i in 0..m {
        for p in 0..k {
            let av = a[i * k + p];
            if av == 0.0 {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            let orow = &mut out[i * n..(i + 1) * n];
            for j in 0..n {
                orow[j] += av * brow[j];
            }
        }
    }
}

fn transpose_last2(t: &Tensor) -> Tensor {
    let s = t.shape();
    let ndim = s.len();
    let (m, n) = (s[ndim - 2], s[ndim - 1]);
    let batch: usize = s[..ndim - 2].iter().product();
    let mut out_shape = s.to_vec();
    out_shape.swap(ndim - 2, ndim - 1);
    let data = t.data();
    let mut out = vec![0.0; data.len()];
    for b in 0..batch {
        let o = b * m * n;
        for i in 0..m {
            for j in 0..n {
                out[o + j * m + i] = data[o + i * n + j];
            }
        }
    }
    Tensor::new(out_shape, out).expect("transpose shape")
}

fn axis_split(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer: usize = shape[..axis].iter().product();
    let len = shape[axis];
    let inner: usize = shape[axis + 1..].iter().product();
    (outer, len, inner)
}

fn softmax_forward(t: &Tensor, axis: usize) -> Tensor {
    let shape = t.shape().to_vec();
    let (outer, len, inner) = axis_split(&shape, axis);
    let data = t.data();
    let mut out = vec![0.0; data.len()];
    for o in 0..outer {
        for i in 0..inner {
            let ix = |l: usize| (o * len + l) * inner + i;
            let mut mx = f64::NEG_INFINITY;
            for l in 0..len {
                mx = mx.max(data[ix(l)]);
            }
            let mut denom = 0.0;
            for l in 0..len {
                let e = (data[ix(l)] - mx).exp();
                out[ix(l)] = e;
                denom += e;
            }
            for l in 0..len {
                out[ix(l)] /= denom;
            }
        }
    }
    Tensor::new(shape, out).expect("softmax shape")
}

fn layer_norm_forward(x: &Tensor, gamma: &[f64], beta: &[f64], eps: f64) -> Tensor {
    let shape = x.shape().to_vec();
    let n = *shape.last().unwrap();
    let rows = x.numel() / n;
    let data = x.data();
    let mut out = vec![0.0; data.len()];
    for r in 0..rows {
        let row = &data[r * n..(r + 1) * n];
        let mean = row.iter().sum::<f64>() / n as f64;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
        let inv_std = 1.0 / (var + eps).sqrt();
        for i in 0..n {
            out[r * n + i] = (row[i] - mean) * inv_std * gamma[i] + beta[i];
        }
    }
    Tensor::new(shape, out).expect("layer_norm shape")
}

/// Reduce a gradient over broadcast dimensions back to the source shape.
fn reduce_to_shape(g: &[f64], out_shape: &[usize], in_shape: &[usize]) -> Vec<f64> {
    if out_shape == in_shape {
        return g.to_vec();
    }
    let numel: usize = in_shape.iter().product();
    let mut out = vec![0.0; numel];
    for (i, gi) in g.iter().enumerate() {
        out[broadcast_source_index(i, out_shape, in_shape)] += gi;
    }
    out
}
