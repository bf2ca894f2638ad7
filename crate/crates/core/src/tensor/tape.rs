//! Tape-based reverse-mode differentiation over [`Tensor`] values.
//!
//! Operations are recorded in evaluation order, which is already a
//! topological order, so `backward` is a single reverse sweep. A tape built
//! with [`Tape::inference`] computes the same values but records nothing.

use super::array::{broadcast_map, broadcast_shape, for_each_broadcast, gemm, reduce_to, split_axis};
use super::{Gradients, ParamId, ParamStore, Tensor, TensorError};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Constant,
    Param(ParamId),
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Sum { input: Var, axis: usize },
    Mean { input: Var, axis: usize },
    SumAll(Var),
    Concat { inputs: Vec<Var> },
    Gather { param: ParamId, indices: Vec<usize> },
    Bag { param: ParamId, bags: Vec<Vec<usize>> },
    IndexSelect { input: Var, axis: usize, indices: Vec<usize> },
    Reshape(Var),
    Relu(Var),
    Sigmoid(Var),
    Softmax(Var),
    BceWithLogits { logits: Var, targets: Vec<f64> },
}

struct Node {
    value: Tensor,
    op: Op,
}

/// Records primitive applications for one forward pass.
pub struct Tape<'p> {
    params: &'p ParamStore,
    nodes: Vec<Node>,
    track: bool,
}

impl<'p> Tape<'p> {
    /// A tape that records operations for a later [`Tape::backward`].
    pub fn new(params: &'p ParamStore) -> Self {
        Self {
            params,
            nodes: Vec::new(),
            track: true,
        }
    }

    /// A tape that only evaluates; `backward` on it is an error.
    pub fn inference(params: &'p ParamStore) -> Self {
        Self {
            params,
            nodes: Vec::new(),
            track: false,
        }
    }

    pub fn params(&self) -> &'p ParamStore {
        self.params
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, name: &'static str, value: Tensor, op: Op) -> Result<Var, TensorError> {
        if !value.is_finite() {
            return Err(TensorError::NonFinite { op: name });
        }
        let op = if self.track { op } else { Op::Constant };
        self.nodes.push(Node { value, op });
        Ok(Var(self.nodes.len() - 1))
    }

    pub fn constant(&mut self, value: Tensor) -> Result<Var, TensorError> {
        self.push("constant", value, Op::Constant)
    }

    /// Brings a whole parameter onto the tape.
    pub fn param(&mut self, id: ParamId) -> Result<Var, TensorError> {
        let value = self.params.get(id).clone();
        self.push("param", value, Op::Param(id))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(shape_err("matmul", sa, sb));
        }
        let (n, k, m) = (sa[0], sa[1], sb[1]);
        let mut out = vec![0.0; n * m];
        gemm(
            n,
            k,
            m,
            self.value(a).data(),
            (k as isize, 1),
            self.value(b).data(),
            (m as isize, 1),
            0.0,
            &mut out,
        );
        let value = Tensor::new(vec![n, m], out)?;
        self.push("matmul", value, Op::MatMul(a, b))
    }

    fn binary(
        &mut self,
        name: &'static str,
        a: Var,
        b: Var,
        f: impl Fn(f64, f64) -> f64,
        op: Op,
    ) -> Result<Var, TensorError> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        let out_shape = broadcast_shape(sa, sb).ok_or_else(|| shape_err(name, sa, sb))?;
        let value = broadcast_map(self.value(a), self.value(b), &out_shape, f);
        self.push(name, value, op)
    }

    /// Elementwise sum with numpy-style broadcasting.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.binary("add", a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.binary("sub", a, b, |x, y| x - y, Op::Sub(a, b))
    }

    /// Elementwise product with broadcasting.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.binary("mul", a, b, |x, y| x * y, Op::Mul(a, b))
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Result<Var, TensorError> {
        let src = self.value(a);
        let data = src.data().iter().map(|v| v * factor).collect();
        let value = Tensor::new(src.shape().to_vec(), data)?;
        self.push("scale", value, Op::Scale(a, factor))
    }

    fn reduce_axis(&mut self, name: &'static str, a: Var, axis: usize, mean: bool) -> Result<Var, TensorError> {
        let shape = self.shape(a).to_vec();
        if axis >= shape.len() {
            return Err(TensorError::Axis { op: name, axis, shape });
        }
        let (outer, n, inner) = split_axis(&shape, axis);
        let src = self.value(a).data();
        let mut out = vec![0.0; outer * inner];
        for o in 0..outer {
            for j in 0..n {
                let row = &src[(o * n + j) * inner..(o * n + j + 1) * inner];
                let dst = &mut out[o * inner..(o + 1) * inner];
                for (d, s) in dst.iter_mut().zip(row) {
                    *d += s;
                }
            }
        }
        if mean {
            let inv = 1.0 / n as f64;
            out.iter_mut().for_each(|v| *v *= inv);
        }
        let mut out_shape = shape;
        out_shape.remove(axis);
        let value = Tensor::new(out_shape, out)?;
        let op = if mean {
            Op::Mean { input: a, axis }
        } else {
            Op::Sum { input: a, axis }
        };
        self.push(name, value, op)
    }

    /// Sums over `axis`, removing it.
    pub fn sum_axis(&mut self, a: Var, axis: usize) -> Result<Var, TensorError> {
        self.reduce_axis("sum", a, axis, false)
    }

    /// Averages over `axis`, removing it.
    pub fn mean_axis(&mut self, a: Var, axis: usize) -> Result<Var, TensorError> {
        self.reduce_axis("mean", a, axis, true)
    }

    /// Sum of every element, as a scalar.
    pub fn sum(&mut self, a: Var) -> Result<Var, TensorError> {
        let total: f64 = self.value(a).data().iter().sum();
        self.push("sum_all", Tensor::scalar(total), Op::SumAll(a))
    }

    /// Mean of every element, as a scalar.
    pub fn mean(&mut self, a: Var) -> Result<Var, TensorError> {
        let n = self.value(a).numel().max(1);
        let s = self.sum(a)?;
        self.scale(s, 1.0 / n as f64)
    }

    /// Concatenation along the last axis; leading axes must agree.
    pub fn concat(&mut self, inputs: &[Var]) -> Result<Var, TensorError> {
        let first = inputs.first().ok_or(TensorError::EmptyInput { op: "concat" })?;
        let lead = self.shape(*first);
        let lead = lead[..lead.len().saturating_sub(1)].to_vec();
        let mut widths = Vec::with_capacity(inputs.len());
        for &v in inputs {
            let s = self.shape(v);
            if s.is_empty() || s[..s.len() - 1] != lead[..] {
                return Err(shape_err("concat", self.shape(*first), s));
            }
            widths.push(s[s.len() - 1]);
        }
        let rows: usize = lead.iter().product();
        let total: usize = widths.iter().sum();
        let mut out = vec![0.0; rows * total];
        let mut offset = 0;
        for (&v, &w) in inputs.iter().zip(&widths) {
            let src = self.value(v).data();
            for r in 0..rows {
                out[r * total + offset..r * total + offset + w].copy_from_slice(&src[r * w..(r + 1) * w]);
            }
            offset += w;
        }
        let mut shape = lead;
        shape.push(total);
        let value = Tensor::new(shape, out)?;
        self.push("concat", value, Op::Concat { inputs: inputs.to_vec() })
    }

    fn table_shape(&self, name: &'static str, param: ParamId) -> Result<(usize, usize), TensorError> {
        let s = self.params.get(param).shape();
        if s.len() != 2 {
            return Err(TensorError::Shape {
                op: name,
                left: s.to_vec(),
                right: vec![],
            });
        }
        Ok((s[0], s[1]))
    }

    /// Stacks rows `indices` of a 2-D parameter table into `(len, width)`.
    pub fn gather(&mut self, param: ParamId, indices: &[usize]) -> Result<Var, TensorError> {
        let (rows, width) = self.table_shape("gather", param)?;
        let table = self.params.get(param).data();
        let mut out = Vec::with_capacity(indices.len() * width);
        for &i in indices {
            if i >= rows {
                return Err(TensorError::Index { op: "gather", index: i, bound: rows });
            }
            out.extend_from_slice(&table[i * width..(i + 1) * width]);
        }
        let value = Tensor::new(vec![indices.len(), width], out)?;
        self.push(
            "gather",
            value,
            Op::Gather { param, indices: indices.to_vec() },
        )
    }

    /// Mean of the gathered rows of each bag, as `(bags, width)`.
    pub fn gather_mean(&mut self, param: ParamId, bags: &[Vec<usize>]) -> Result<Var, TensorError> {
        let (rows, width) = self.table_shape("gather_mean", param)?;
        let table = self.params.get(param).data();
        let mut out = vec![0.0; bags.len() * width];
        for (b, bag) in bags.iter().enumerate() {
            if bag.is_empty() {
                return Err(TensorError::EmptyInput { op: "gather_mean" });
            }
            let inv = 1.0 / bag.len() as f64;
            let dst = &mut out[b * width..(b + 1) * width];
            for &i in bag {
                if i >= rows {
                    return Err(TensorError::Index { op: "gather_mean", index: i, bound: rows });
                }
                for (d, s) in dst.iter_mut().zip(&table[i * width..(i + 1) * width]) {
                    *d += s * inv;
                }
            }
        }
        let value = Tensor::new(vec![bags.len(), width], out)?;
        self.push("gather_mean", value, Op::Bag { param, bags: bags.to_vec() })
    }

    /// Selects `indices` along `axis` (indices may repeat).
    pub fn index_select(&mut self, a: Var, axis: usize, indices: &[usize]) -> Result<Var, TensorError> {
        let shape = self.shape(a).to_vec();
        if axis >= shape.len() {
            return Err(TensorError::Axis { op: "index_select", axis, shape });
        }
        let (outer, n, inner) = split_axis(&shape, axis);
        let src = self.value(a).data();
        let mut out = Vec::with_capacity(outer * indices.len() * inner);
        for o in 0..outer {
            for &i in indices {
                if i >= n {
                    return Err(TensorError::Index { op: "index_select", index: i, bound: n });
                }
                out.extend_from_slice(&src[(o * n + i) * inner..(o * n + i + 1) * inner]);
            }
        }
        let mut out_shape = shape;
        out_shape[axis] = indices.len();
        let value = Tensor::new(out_shape, out)?;
        self.push(
            "index_select",
            value,
            Op::IndexSelect { input: a, axis, indices: indices.to_vec() },
        )
    }

    pub fn reshape(&mut self, a: Var, shape: Vec<usize>) -> Result<Var, TensorError> {
        let src = self.value(a);
        if shape.iter().product::<usize>() != src.numel() {
            return Err(shape_err("reshape", src.shape(), &shape));
        }
        let value = src.clone().with_shape(shape);
        self.push("reshape", value, Op::Reshape(a))
    }

    fn unary(&mut self, name: &'static str, a: Var, f: impl Fn(f64) -> f64, op: Op) -> Result<Var, TensorError> {
        let src = self.value(a);
        let data = src.data().iter().map(|&x| f(x)).collect();
        let value = Tensor::new(src.shape().to_vec(), data)?;
        self.push(name, value, op)
    }

    pub fn relu(&mut self, a: Var) -> Result<Var, TensorError> {
        self.unary("relu", a, |x| x.max(0.0), Op::Relu(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var, TensorError> {
        self.unary("sigmoid", a, sigmoid, Op::Sigmoid(a))
    }

    /// Softmax over the last axis.
    pub fn softmax(&mut self, a: Var) -> Result<Var, TensorError> {
        let src = self.value(a);
        let shape = src.shape().to_vec();
        let width = *shape.last().ok_or(TensorError::EmptyInput { op: "softmax" })?;
        let mut out = src.data().to_vec();
        for row in out.chunks_mut(width.max(1)) {
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut total = 0.0;
            for v in row.iter_mut() {
                *v = (*v - max).exp();
                total += *v;
            }
            row.iter_mut().for_each(|v| *v /= total);
        }
        let value = Tensor::new(shape, out)?;
        self.push("softmax", value, Op::Softmax(a))
    }

    /// Elementwise binary cross-entropy on logits, in the stable form
    /// `max(z,0) − z·y + ln(1 + e^{−|z|})`.
    pub fn bce_with_logits(&mut self, logits: Var, targets: &[f64]) -> Result<Var, TensorError> {
        let src = self.value(logits);
        if src.numel() != targets.len() {
            return Err(shape_err("bce_with_logits", src.shape(), &[targets.len()]));
        }
        let data = src
            .data()
            .iter()
            .zip(targets)
            .map(|(&z, &y)| bce_with_logits(z, y))
            .collect();
        let value = Tensor::new(src.shape().to_vec(), data)?;
        self.push(
            "bce_with_logits",
            value,
            Op::BceWithLogits { logits, targets: targets.to_vec() },
        )
    }

    /// Reverse sweep from a scalar `loss`, returning parameter gradients.
    pub fn backward(&self, loss: Var) -> Result<Gradients, TensorError> {
        if !self.track {
            return Err(TensorError::NotRecording);
        }
        let loss_value = self.value(loss);
        if loss_value.numel() != 1 {
            return Err(TensorError::NonScalarLoss { shape: loss_value.shape().to_vec() });
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(vec![1.0]);
        let mut out = Gradients::with_len(self.params.len());

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            let out_shape = node.value.shape();
            match &node.op {
                Op::Constant => {}
                Op::Param(id) => out.accumulate(*id, out_shape, |buf| add_into(buf, &g)),
                Op::MatMul(a, b) => {
                    let (sa, sb) = (self.shape(*a), self.shape(*b));
                    let (n, k, m) = (sa[0], sa[1], sb[1]);
                    // dA = dC · Bᵀ
                    let mut da = vec![0.0; n * k];
                    gemm(n, m, k, &g, (m as isize, 1), self.value(*b).data(), (1, m as isize), 0.0, &mut da);
                    // dB = Aᵀ · dC
                    let mut db = vec![0.0; k * m];
                    gemm(k, n, m, self.value(*a).data(), (1, k as isize), &g, (m as isize, 1), 0.0, &mut db);
                    accumulate(&mut grads, *a, da);
                    accumulate(&mut grads, *b, db);
                }
                Op::Add(a, b) | Op::Sub(a, b) => {
                    let ga = reduce_to(&g, out_shape, self.shape(*a));
                    let mut gb = reduce_to(&g, out_shape, self.shape(*b));
                    if matches!(node.op, Op::Sub(..)) {
                        gb.iter_mut().for_each(|v| *v = -*v);
                    }
                    accumulate(&mut grads, *a, ga);
                    accumulate(&mut grads, *b, gb);
                }
                Op::Mul(a, b) => {
                    let (va, vb) = (self.value(*a), self.value(*b));
                    let mut ga = vec![0.0; va.numel()];
                    let mut gb = vec![0.0; vb.numel()];
                    let (da, db) = (va.data(), vb.data());
                    for_each_broadcast(out_shape, va.shape(), vb.shape(), |o, ia, ib| {
                        ga[ia] += g[o] * db[ib];
                        gb[ib] += g[o] * da[ia];
                    });
                    accumulate(&mut grads, *a, ga);
                    accumulate(&mut grads, *b, gb);
                }
                Op::Scale(a, factor) => {
                    accumulate(&mut grads, *a, g.iter().map(|v| v * factor).collect());
                }
                Op::Sum { input, axis } | Op::Mean { input, axis } => {
                    let in_shape = self.shape(*input);
                    let (outer, n, inner) = split_axis(in_shape, *axis);
                    let factor = if matches!(node.op, Op::Mean { .. }) { 1.0 / n as f64 } else { 1.0 };
                    let mut gi = vec![0.0; outer * n * inner];
                    for o in 0..outer {
                        let src = &g[o * inner..(o + 1) * inner];
                        for j in 0..n {
                            let dst = &mut gi[(o * n + j) * inner..(o * n + j + 1) * inner];
                            for (d, s) in dst.iter_mut().zip(src) {
                                *d = s * factor;
                            }
                        }
                    }
                    accumulate(&mut grads, *input, gi);
                }
                Op::SumAll(a) => {
                    let n = self.value(*a).numel();
                    accumulate(&mut grads, *a, vec![g[0]; n]);
                }
                Op::Concat { inputs } => {
                    let total = *out_shape.last().unwrap_or(&0);
                    let rows = if total == 0 { 0 } else { g.len() / total };
                    let mut offset = 0;
                    for &v in inputs {
                        let w = *self.shape(v).last().unwrap_or(&0);
                        let mut gi = vec![0.0; rows * w];
                        for r in 0..rows {
                            gi[r * w..(r + 1) * w].copy_from_slice(&g[r * total + offset..r * total + offset + w]);
                        }
                        offset += w;
                        accumulate(&mut grads, v, gi);
                    }
                }
                Op::Gather { param, indices } => {
                    let table_shape = self.params.get(*param).shape().to_vec();
                    let width = table_shape[1];
                    out.accumulate(*param, &table_shape, |buf| {
                        for (r, &i) in indices.iter().enumerate() {
                            let dst = &mut buf[i * width..(i + 1) * width];
                            for (d, s) in dst.iter_mut().zip(&g[r * width..(r + 1) * width]) {
                                *d += s;
                            }
                        }
                    });
                }
                Op::Bag { param, bags } => {
                    let table_shape = self.params.get(*param).shape().to_vec();
                    let width = table_shape[1];
                    out.accumulate(*param, &table_shape, |buf| {
                        for (b, bag) in bags.iter().enumerate() {
                            let inv = 1.0 / bag.len() as f64;
                            for &i in bag {
                                let dst = &mut buf[i * width..(i + 1) * width];
                                for (d, s) in dst.iter_mut().zip(&g[b * width..(b + 1) * width]) {
                                    *d += s * inv;
                                }
                            }
                        }
                    });
                }
                Op::IndexSelect { input, axis, indices } => {
                    let in_shape = self.shape(*input);
                    let (outer, n, inner) = split_axis(in_shape, *axis);
                    let mut gi = vec![0.0; outer * n * inner];
                    let sel = indices.len();
                    for o in 0..outer {
                        for (p, &i) in indices.iter().enumerate() {
                            let src = &g[(o * sel + p) * inner..(o * sel + p + 1) * inner];
                            let dst = &mut gi[(o * n + i) * inner..(o * n + i + 1) * inner];
                            for (d, s) in dst.iter_mut().zip(src) {
                                *d += s;
                            }
                        }
                    }
                    accumulate(&mut grads, *input, gi);
                }
                Op::Reshape(a) => accumulate(&mut grads, *a, g),
                Op::Relu(a) => {
                    let x = self.value(*a).data();
                    let gi = g.iter().zip(x).map(|(gv, &xv)| if xv > 0.0 { *gv } else { 0.0 }).collect();
                    accumulate(&mut grads, *a, gi);
                }
                Op::Sigmoid(a) => {
                    let y = node.value.data();
                    let gi = g.iter().zip(y).map(|(gv, &yv)| gv * yv * (1.0 - yv)).collect();
                    accumulate(&mut grads, *a, gi);
                }
                Op::Softmax(a) => {
                    let y = node.value.data();
                    let width = *out_shape.last().unwrap_or(&1);
                    let mut gi = vec![0.0; y.len()];
                    for ((gr, yr), dst) in g.chunks(width).zip(y.chunks(width)).zip(gi.chunks_mut(width)) {
                        let dot: f64 = gr.iter().zip(yr).map(|(a, b)| a * b).sum();
                        for ((d, gv), yv) in dst.iter_mut().zip(gr).zip(yr) {
                            *d = yv * (gv - dot);
                        }
                    }
                    accumulate(&mut grads, *a, gi);
                }
                Op::BceWithLogits { logits, targets } => {
                    let z = self.value(*logits).data();
                    let gi = g
                        .iter()
                        .zip(z)
                        .zip(targets)
                        .map(|((gv, &zv), &y)| gv * (sigmoid(zv) - y))
                        .collect();
                    accumulate(&mut grads, *logits, gi);
                }
            }
        }
        Ok(out)
    }
}

fn accumulate(grads: &mut [Option<Vec<f64>>], v: Var, g: Vec<f64>) {
    match &mut grads[v.0] {
        Some(existing) => add_into(existing, &g),
        slot @ None => *slot = Some(g),
    }
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

fn shape_err(op: &'static str, left: &[usize], right: &[usize]) -> TensorError {
    TensorError::Shape {
        op,
        left: left.to_vec(),
        right: right.to_vec(),
    }
}

/// Logistic function, evaluated without overflow for large |x|.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Stable binary cross-entropy on a logit.
pub fn bce_with_logits(z: f64, y: f64) -> f64 {
    z.max(0.0) - z * y + (-z.abs()).exp().ln_1p()
}
