//! Tape-based reverse-mode differentiation over [`Tensor`] values.
//!
//! A [`Graph`] records every operation of one forward pass. Parameters are
//! borrowed from a [`ParamStore`] rather than copied, so a graph is cheap to
//! build per sample and is discarded after [`Graph::backward`].

use std::collections::HashMap;

use crate::error::{NnError, Result};
use crate::kernels::{self, ConvGeometry, SameAxis};
use crate::params::{ParamId, ParamStore};
use crate::tensor::Tensor;

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
    Param(ParamId),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    AddN(Vec<Var>),
    Relu(Var),
    Tanh(Var),
    Sigmoid(Var),
    Linear {
        x: Var,
        w: Var,
        b: Option<Var>,
    },
    Conv2d {
        x: Var,
        k: Var,
        b: Option<Var>,
        geo: ConvGeometry,
    },
    MaxPool {
        x: Var,
        argmax: Vec<usize>,
    },
    GlobalAvgPool(Var),
    Concat(Vec<Var>),
    Slice {
        x: Var,
        start: usize,
    },
    Reshape(Var),
    SoftmaxCe {
        logits: Var,
        label: usize,
        weight: f64,
        probs: Vec<f64>,
    },
    Mse(Var, Var),
    SumSquares(Var),
}

#[derive(Debug)]
struct Node {
    value: Option<Tensor>,
    op: Op,
    needs_grad: bool,
}

pub struct Graph<'p> {
    store: &'p ParamStore,
    nodes: Vec<Node>,
    param_vars: HashMap<ParamId, Var>,
}

/// Gradients of a scalar w.r.t. every node of a graph.
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
    params: Vec<(ParamId, Var)>,
}

impl Gradients {
    pub fn wrt(&self, var: Var) -> Option<&Tensor> {
        self.grads[var.0].as_ref()
    }

    pub fn param_grads(&self) -> impl Iterator<Item = (ParamId, &Tensor)> {
        self.params
            .iter()
            .filter_map(|&(id, v)| self.grads[v.0].as_ref().map(|g| (id, g)))
    }

    /// Adds the parameter gradients into the store's accumulators.
    pub fn accumulate_into(&self, store: &mut ParamStore) {
        for (id, g) in self.param_grads() {
            store.get_mut(id).grad.add_assign(g);
        }
    }
}

fn expect_same(op: &'static str, a: &Tensor, b: &Tensor) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(NnError::shape(
            op,
            format!("{:?} vs {:?}", a.shape(), b.shape()),
        ));
    }
    Ok(())
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

impl<'p> Graph<'p> {
    pub fn new(store: &'p ParamStore) -> Self {
        Graph {
            store,
            nodes: Vec::new(),
            param_vars: HashMap::new(),
        }
    }

    pub fn store(&self) -> &'p ParamStore {
        self.store
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        let needs_grad = self.op_needs_grad(&op);
        self.nodes.push(Node {
            value: Some(value),
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn op_needs_grad(&self, op: &Op) -> bool {
        let n = |v: &Var| self.nodes[v.0].needs_grad;
        match op {
            Op::Leaf => false,
            Op::Param(_) => true,
            Op::Add(a, b) | Op::Sub(a, b) | Op::Mul(a, b) | Op::Mse(a, b) => n(a) || n(b),
            Op::Scale(a, _)
            | Op::Relu(a)
            | Op::Tanh(a)
            | Op::Sigmoid(a)
            | Op::GlobalAvgPool(a)
            | Op::Reshape(a)
            | Op::SumSquares(a) => n(a),
            Op::AddN(vs) | Op::Concat(vs) => vs.iter().any(n),
            Op::Linear { x, w, b } => n(x) || n(w) || b.as_ref().is_some_and(n),
            Op::Conv2d { x, k, b, .. } => n(x) || n(k) || b.as_ref().is_some_and(n),
            Op::MaxPool { x, .. } | Op::Slice { x, .. } => n(x),
            Op::SoftmaxCe { logits, .. } => n(logits),
        }
    }

    /// Leaf whose gradient is tracked, unlike [`Graph::input`].
    pub fn variable(&mut self, t: Tensor) -> Var {
        self.nodes.push(Node {
            value: Some(t),
            op: Op::Leaf,
            needs_grad: true,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        match (&self.nodes[v.0].value, &self.nodes[v.0].op) {
            (Some(t), _) => t,
            (None, Op::Param(id)) => self.store.value(*id),
            _ => unreachable!("node without value"),
        }
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.value(v).shape()
    }

    pub fn input(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf)
    }

    /// Leaf bound to a stored parameter. Repeated calls return the same var.
    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(&v) = self.param_vars.get(&id) {
            return v;
        }
        self.nodes.push(Node {
            value: None,
            op: Op::Param(id),
            needs_grad: true,
        });
        let v = Var(self.nodes.len() - 1);
        self.param_vars.insert(id, v);
        v
    }

    fn zip_map(&mut self, op: &'static str, a: Var, b: Var, f: impl Fn(f64, f64) -> f64) -> Result<Tensor> {
        let (ta, tb) = (self.value(a), self.value(b));
        expect_same(op, ta, tb)?;
        let data = ta.data().iter().zip(tb.data()).map(|(x, y)| f(*x, *y)).collect();
        Tensor::from_vec(ta.shape(), data)
    }

    fn map(&self, a: Var, f: impl Fn(f64) -> f64) -> Tensor {
        let t = self.value(a);
        Tensor::from_vec(t.shape(), t.data().iter().map(|x| f(*x)).collect())
            .expect("same length")
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let t = self.zip_map("add", a, b, |x, y| x + y)?;
        Ok(self.push(t, Op::Add(a, b)))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let t = self.zip_map("sub", a, b, |x, y| x - y)?;
        Ok(self.push(t, Op::Sub(a, b)))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let t = self.zip_map("mul", a, b, |x, y| x * y)?;
        Ok(self.push(t, Op::Mul(a, b)))
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Var {
        let t = self.map(a, |x| x * factor);
        self.push(t, Op::Scale(a, factor))
    }

    /// Elementwise sum of equally shaped tensors.
    pub fn add_n(&mut self, vars: &[Var]) -> Result<Var> {
        let first = *vars
            .first()
            .ok_or_else(|| NnError::invalid("add_n", "no operands"))?;
        let mut acc = self.value(first).clone();
        for &v in &vars[1..] {
            let t = self.value(v);
            expect_same("add_n", &acc, t)?;
            acc.add_assign(t);
        }
        Ok(self.push(acc, Op::AddN(vars.to_vec())))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let t = self.map(a, |x| x.max(0.0));
        self.push(t, Op::Relu(a))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let t = self.map(a, f64::tanh);
        self.push(t, Op::Tanh(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let t = self.map(a, sigmoid);
        self.push(t, Op::Sigmoid(a))
    }

    /// Affine map `x · W + b` with `x` of any shape holding `n` values,
    /// `W` of shape `[n, m]` and `b` of shape `[m]`.
    pub fn linear(&mut self, x: Var, w: Var, b: Option<Var>) -> Result<Var> {
        let (tx, tw) = (self.value(x), self.value(w));
        let n = tx.len();
        if tw.shape().len() != 2 || tw.shape()[0] != n {
            return Err(NnError::shape(
                "linear",
                format!("input of {n} values vs weights {:?}", tw.shape()),
            ));
        }
        let m = tw.shape()[1];
        let mut out = match b {
            Some(b) => {
                let tb = self.value(b);
                if tb.shape() != [m] {
                    return Err(NnError::shape(
                        "linear",
                        format!("bias {:?}, expected [{m}]", tb.shape()),
                    ));
                }
                tb.data().to_vec()
            }
            None => vec![0.0; m],
        };
        for (i, &xi) in tx.data().iter().enumerate() {
            if xi == 0.0 {
                continue;
            }
            let row = &tw.data()[i * m..(i + 1) * m];
            for (o, wv) in out.iter_mut().zip(row) {
                *o += xi * wv;
            }
        }
        Ok(self.push(Tensor::vector(out), Op::Linear { x, w, b }))
    }

    /// Strided 2D cross-correlation with "same" zero padding.
    /// `x: [H, W, Cin]`, `k: [kh, kw, Cin, Cout]`, `b: [Cout]`.
    pub fn conv2d(&mut self, x: Var, k: Var, b: Option<Var>, stride: usize) -> Result<Var> {
        if stride == 0 {
            return Err(NnError::invalid("conv2d", "stride must be positive"));
        }
        let (tx, tk) = (self.value(x), self.value(k));
        let (xs, ks) = (tx.shape(), tk.shape());
        if xs.len() != 3 || ks.len() != 4 {
            return Err(NnError::shape(
                "conv2d",
                format!("input {xs:?} / kernel {ks:?} rank"),
            ));
        }
        if xs[2] != ks[2] {
            return Err(NnError::shape(
                "conv2d",
                format!("input has {} channels, kernel expects {}", xs[2], ks[2]),
            ));
        }
        let geo = ConvGeometry {
            rows: SameAxis::new(xs[0], ks[0], stride),
            cols: SameAxis::new(xs[1], ks[1], stride),
            kh: ks[0],
            kw: ks[1],
            c_in: ks[2],
            c_out: ks[3],
            stride,
        };
        if xs[0] == 0 || xs[1] == 0 {
            return Err(NnError::shape("conv2d", "empty spatial input"));
        }
        let bias = match b {
            Some(b) => {
                let tb = self.value(b);
                if tb.shape() != [geo.c_out] {
                    return Err(NnError::shape(
                        "conv2d",
                        format!("bias {:?}, expected [{}]", tb.shape(), geo.c_out),
                    ));
                }
                Some(tb.data())
            }
            None => None,
        };
        let out = kernels::conv2d_forward(&geo, tx.data(), tk.data(), bias);
        let t = Tensor::from_vec(&geo.output_shape(), out)?;
        Ok(self.push(t, Op::Conv2d { x, k, b, geo }))
    }

    /// Max pooling over `size × size` windows with "same" geometry.
    pub fn maxpool(&mut self, x: Var, size: usize, stride: usize) -> Result<Var> {
        let tx = self.value(x);
        let s = tx.shape();
        if s.len() != 3 || size == 0 || stride == 0 {
            return Err(NnError::shape("maxpool", format!("input {s:?}")));
        }
        if s[0] < size || s[1] < size {
            return Err(NnError::shape(
                "maxpool",
                format!("spatial dims {s:?} smaller than window {size}"),
            ));
        }
        let (out, argmax, shape) = kernels::maxpool_forward(tx.data(), [s[0], s[1], s[2]], size, stride);
        let t = Tensor::from_vec(&shape, out)?;
        Ok(self.push(t, Op::MaxPool { x, argmax }))
    }

    /// Mean over the spatial axes of `[H, W, C]`, giving `[C]`.
    pub fn global_avg_pool(&mut self, x: Var) -> Result<Var> {
        let tx = self.value(x);
        let s = tx.shape();
        if s.len() != 3 {
            return Err(NnError::shape("global_avg_pool", format!("{s:?}")));
        }
        let c = s[2];
        let count = (s[0] * s[1]) as f64;
        let mut out = vec![0.0; c];
        for pix in tx.data().chunks_exact(c) {
            for (o, v) in out.iter_mut().zip(pix) {
                *o += v;
            }
        }
        out.iter_mut().for_each(|o| *o /= count);
        Ok(self.push(Tensor::vector(out), Op::GlobalAvgPool(x)))
    }

    /// Flat concatenation into a vector.
    pub fn concat(&mut self, vars: &[Var]) -> Var {
        let mut data = Vec::new();
        for &v in vars {
            data.extend_from_slice(self.value(v).data());
        }
        self.push(Tensor::vector(data), Op::Concat(vars.to_vec()))
    }

    /// Contiguous run of `len` values from the flattened input.
    pub fn slice(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let tx = self.value(x);
        if start + len > tx.len() {
            return Err(NnError::shape(
                "slice",
                format!("{start}..{} of {}", start + len, tx.len()),
            ));
        }
        let data = tx.data()[start..start + len].to_vec();
        Ok(self.push(Tensor::vector(data), Op::Slice { x, start }))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let t = self.value(x).clone().reshaped(shape)?;
        Ok(self.push(t, Op::Reshape(x)))
    }

    /// `weight · (−log softmax(logits)[label])`.
    pub fn softmax_ce(&mut self, logits: Var, label: usize, weight: f64) -> Result<Var> {
        let tl = self.value(logits);
        let k = tl.len();
        if k < 2 || label >= k {
            return Err(NnError::invalid(
                "softmax_ce",
                format!("label {label} with {k} classes"),
            ));
        }
        let max = tl.data().iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let log_sum = tl.data().iter().map(|l| (l - max).exp()).sum::<f64>().ln() + max;
        let loss = weight * (log_sum - tl.data()[label]);
        let probs = softmax(tl.data());
        Ok(self.push(
            Tensor::scalar(loss),
            Op::SoftmaxCe {
                logits,
                label,
                weight,
                probs,
            },
        ))
    }

    /// Mean of squared elementwise differences.
    pub fn mse(&mut self, pred: Var, target: Var) -> Result<Var> {
        let (tp, tt) = (self.value(pred), self.value(target));
        expect_same("mse", tp, tt)?;
        let n = tp.len().max(1) as f64;
        let s: f64 = tp
            .data()
            .iter()
            .zip(tt.data())
            .map(|(p, t)| (p - t) * (p - t))
            .sum();
        Ok(self.push(Tensor::scalar(s / n), Op::Mse(pred, target)))
    }

    pub fn sum_squares(&mut self, x: Var) -> Var {
        let s = self.value(x).sum_squares();
        self.push(Tensor::scalar(s), Op::SumSquares(x))
    }

    /// `lambda · Σ p²` over the given parameters.
    pub fn l2_penalty(&mut self, params: &[ParamId], lambda: f64) -> Result<Var> {
        if params.is_empty() {
            return Ok(self.input(Tensor::scalar(0.0)));
        }
        let terms: Vec<Var> = params
            .iter()
            .map(|&id| {
                let p = self.param(id);
                self.sum_squares(p)
            })
            .collect();
        let total = self.add_n(&terms)?;
        Ok(self.scale(total, lambda))
    }

    /// Reverse sweep from a one-element `loss` node.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        if self.value(loss).len() != 1 {
            return Err(NnError::invalid(
                "backward",
                format!("loss has shape {:?}", self.shape(loss)),
            ));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(Tensor::full(self.shape(loss), 1.0));

        for idx in (0..=loss.0).rev() {
            if !self.nodes[idx].needs_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else {
                continue;
            };
            self.backprop_node(idx, &g, &mut grads);
            grads[idx] = Some(g);
        }

        let mut params: Vec<(ParamId, Var)> = self.param_vars.iter().map(|(&id, &v)| (id, v)).collect();
        params.sort_by_key(|(id, _)| *id);
        Ok(Gradients { grads, params })
    }

    fn backprop_node(&self, idx: usize, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let acc = |grads: &mut [Option<Tensor>], v: Var, shape: &[usize], f: &dyn Fn(&mut [f64])| {
            if !self.nodes[v.0].needs_grad {
                return;
            }
            let slot = grads[v.0].get_or_insert_with(|| Tensor::zeros(shape));
            f(slot.data_mut());
        };
        let gd = g.data();
        let node = &self.nodes[idx];
        match &node.op {
            Op::Leaf | Op::Param(_) => {}
            Op::Add(a, b) => {
                for v in [a, b] {
                    let shape = self.shape(*v).to_vec();
                    acc(grads, *v, &shape, &|d| d.iter_mut().zip(gd).for_each(|(x, y)| *x += y));
                }
            }
            Op::Sub(a, b) => {
                let shape = self.shape(*a).to_vec();
                acc(grads, *a, &shape, &|d| d.iter_mut().zip(gd).for_each(|(x, y)| *x += y));
                acc(grads, *b, &shape, &|d| d.iter_mut().zip(gd).for_each(|(x, y)| *x -= y));
            }
            Op::Mul(a, b) => {
                let (ta, tb) = (self.value(*a).data().to_vec(), self.value(*b).data().to_vec());
                let shape = self.shape(*a).to_vec();
                acc(grads, *a, &shape, &|d| {
                    for ((x, y), o) in d.iter_mut().zip(gd).zip(&tb) {
                        *x += y * o;
                    }
                });
                acc(grads, *b, &shape, &|d| {
                    for ((x, y), o) in d.iter_mut().zip(gd).zip(&ta) {
                        *x += y * o;
                    }
                });
            }
            Op::Scale(a, f) => {
                let shape = self.shape(*a).to_vec();
                acc(grads, *a, &shape, &|d| d.iter_mut().zip(gd).for_each(|(x, y)| *x += f * y));
            }
            Op::AddN(vs) => {
                for v in vs {
                    let shape = self.shape(*v).to_vec();
                    acc(grads, *v, &shape, &|d| d.iter_mut().zip(gd).for_each(|(x, y)| *x += y));
                }
            }
            Op::Relu(a) => {
                let ta = self.value(*a);
                acc(grads, *a, ta.shape(), &|d| {
                    for ((x, y), v) in d.iter_mut().zip(gd).zip(ta.data()) {
                        if *v > 0.0 {
                            *x += y;
                        }
                    }
                });
            }
            Op::Tanh(a) => {
                let out = node.value.as_ref().unwrap();
                let shape = self.shape(*a).to_vec();
                acc(grads, *a, &shape, &|d| {
                    for ((x, y), t) in d.iter_mut().zip(gd).zip(out.data()) {
                        *x += y * (1.0 - t * t);
                    }
                });
            }
            Op::Sigmoid(a) => {
                let out = node.value.as_ref().unwrap();
                let shape = self.shape(*a).to_vec();
                acc(grads, *a, &shape, &|d| {
                    for ((x, y), s) in d.iter_mut().zip(gd).zip(out.data()) {
                        *x += y * s * (1.0 - s);
                    }
                });
            }
            Op::Linear { x, w, b } => {
                let (tx, tw) = (self.value(*x), self.value(*w));
                let m = tw.shape()[1];
                acc(grads, *x, tx.shape(), &|d| {
                    for (i, di) in d.iter_mut().enumerate() {
                        let row = &tw.data()[i * m..(i + 1) * m];
                        *di += row.iter().zip(gd).map(|(w, g)| w * g).sum::<f64>();
                    }
                });
                acc(grads, *w, tw.shape(), &|d| {
                    for (i, &xi) in tx.data().iter().enumerate() {
                        if xi == 0.0 {
                            continue;
                        }
                        for (dw, g) in d[i * m..(i + 1) * m].iter_mut().zip(gd) {
                            *dw += xi * g;
                        }
                    }
                });
                if let Some(b) = b {
                    acc(grads, *b, &[m], &|d| d.iter_mut().zip(gd).for_each(|(x, y)| *x += y));
                }
            }
            Op::Conv2d { x, k, b, geo } => {
                let (tx, tk) = (self.value(*x), self.value(*k));
                // Three disjoint slots: take them out to satisfy the borrow checker.
                let take = |grads: &mut [Option<Tensor>], v: Var, shape: &[usize]| {
                    self.nodes[v.0]
                        .needs_grad
                        .then(|| grads[v.0].take().unwrap_or_else(|| Tensor::zeros(shape)))
                };
                let mut gx = take(grads, *x, tx.shape());
                let mut gk = take(grads, *k, tk.shape());
                let mut gb = b.and_then(|b| take(grads, b, &[geo.c_out]));
                kernels::conv2d_backward(
                    geo,
                    tx.data(),
                    tk.data(),
                    gd,
                    gx.as_mut().map(|t| t.data_mut()),
                    gk.as_mut().map(|t| t.data_mut()),
                    gb.as_mut().map(|t| t.data_mut()),
                );
                if gx.is_some() {
                    grads[x.0] = gx;
                }
                if gk.is_some() {
                    grads[k.0] = gk;
                }
                if let (Some(b), Some(_)) = (b, &gb) {
                    grads[b.0] = gb;
                }
            }
            Op::MaxPool { x, argmax } => {
                let shape = self.shape(*x).to_vec();
                acc(grads, *x, &shape, &|d| {
                    for (&src, y) in argmax.iter().zip(gd) {
                        d[src] += y;
                    }
                });
            }
            Op::GlobalAvgPool(x) => {
                let shape = self.shape(*x).to_vec();
                let c = shape[2];
                let count = (shape[0] * shape[1]) as f64;
                acc(grads, *x, &shape, &|d| {
                    for pix in d.chunks_exact_mut(c) {
                        for (p, y) in pix.iter_mut().zip(gd) {
                            *p += y / count;
                        }
                    }
                });
            }
            Op::Concat(vs) => {
                let mut off = 0;
                for v in vs {
                    let shape = self.shape(*v).to_vec();
                    let n = self.value(*v).len();
                    let part = &gd[off..off + n];
                    acc(grads, *v, &shape, &|d| d.iter_mut().zip(part).for_each(|(x, y)| *x += y));
                    off += n;
                }
            }
            Op::Slice { x, start } => {
                let shape = self.shape(*x).to_vec();
                let start = *start;
                acc(grads, *x, &shape, &|d| {
                    for (x, y) in d[start..start + gd.len()].iter_mut().zip(gd) {
                        *x += y;
                    }
                });
            }
            Op::Reshape(x) => {
                let shape = self.shape(*x).to_vec();
                acc(grads, *x, &shape, &|d| d.iter_mut().zip(gd).for_each(|(x, y)| *x += y));
            }
            Op::SoftmaxCe {
                logits,
                label,
                weight,
                probs,
            } => {
                let shape = self.shape(*logits).to_vec();
                let scale = gd[0] * weight;
                acc(grads, *logits, &shape, &|d| {
                    for (i, (x, p)) in d.iter_mut().zip(probs).enumerate() {
                        let onehot = if i == *label { 1.0 } else { 0.0 };
                        *x += scale * (p - onehot);
                    }
                });
            }
            Op::Mse(p, t) => {
                let (tp, tt) = (self.value(*p).data().to_vec(), self.value(*t).data().to_vec());
                let shape = self.shape(*p).to_vec();
                let f = 2.0 * gd[0] / tp.len().max(1) as f64;
                acc(grads, *p, &shape, &|d| {
                    for ((x, a), b) in d.iter_mut().zip(&tp).zip(&tt) {
                        *x += f * (a - b);
                    }
                });
                acc(grads, *t, &shape, &|d| {
                    for ((x, a), b) in d.iter_mut().zip(&tp).zip(&tt) {
                        *x -= f * (a - b);
                    }
                });
            }
            Op::SumSquares(x) => {
                let tx = self.value(*x);
                let f = 2.0 * gd[0];
                acc(grads, *x, tx.shape(), &|d| {
                    for (g, v) in d.iter_mut().zip(tx.data()) {
                        *g += f * v;
                    }
                });
            }
        }
    }
}
