//! Wengert-list autodiff.

use super::conv::{self, PadMode};
use super::{Element, Shape, Tensor};
use crate::error::{dim_err, Error, Result};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Activation {
    Relu,
    LeakyRelu(f64),
    Tanh,
    Sigmoid,
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Div(Var, Var),
    AddScalar(Var),
    MulScalar(Var, f64),
    Sqrt(Var),
    Square(Var),
    Abs(Var),
    Act(Var, Activation),
    Softplus(Var),
    Broadcast(Var),
    Sum(Var),
    Mean(Var),
    Pad(Var, PadMode),
    Conv {
        x: Var,
        w: Var,
        b: Option<Var>,
        stride: usize,
    },
    Upsample(Var, usize),
    UpConv {
        x: Var,
        w: Var,
        b: Option<Var>,
    },
    Concat(Vec<Var>),
    CrossEntropy(Var, Vec<usize>),
}

struct Node<E> {
    value: Tensor<E>,
    op: Op,
    requires_grad: bool,
}

/// Records operations for reverse-mode differentiation.
///
/// A tape is single-owner and append-only; every op returns a [`Var`]
/// pointing at its freshly computed value.
pub struct Tape<E: Element = f32> {
    nodes: Vec<Node<E>>,
}

impl<E: Element> Default for Tape<E> {
    fn default() -> Self {
        Self::new()
    }
}

/// Gradients produced by [`Tape::backward`], indexed by [`Var`].
pub struct Grads<E> {
    grads: Vec<Option<Tensor<E>>>,
}

impl<E: Element> Grads<E> {
    pub fn get(&self, v: Var) -> Option<&Tensor<E>> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor<E>> {
        self.grads.get_mut(v.0).and_then(|g| g.take())
    }
}

impl<E: Element> Tape<E> {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor<E> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> Shape {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Scalar value of a single-element node as f64.
    pub fn scalar(&self, v: Var) -> f64 {
        self.value(v).item().as_f64()
    }

    fn push(&mut self, value: Tensor<E>, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn any_grad(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    pub fn leaf(&mut self, value: Tensor<E>, requires_grad: bool) -> Var {
        self.push(value, Op::Leaf, requires_grad)
    }

    pub fn constant(&mut self, value: Tensor<E>) -> Var {
        self.leaf(value, false)
    }

    /// Value copy of `v` that is cut off from the gradient graph.
    pub fn detach(&mut self, v: Var) -> Var {
        let t = self.value(v).clone();
        self.constant(t)
    }

    fn binary(&mut self, a: Var, b: Var, name: &str, f: impl Fn(E, E) -> E) -> Result<Tensor<E>> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.shape() != vb.shape() {
            return Err(dim_err!("{name}: shape {} vs {}", va.shape(), vb.shape()));
        }
        va.zip_map(vb, f)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let t = self.binary(a, b, "add", |x, y| x + y)?;
        let rg = self.any_grad(&[a, b]);
        Ok(self.push(t, Op::Add(a, b), rg))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let t = self.binary(a, b, "sub", |x, y| x - y)?;
        let rg = self.any_grad(&[a, b]);
        Ok(self.push(t, Op::Sub(a, b), rg))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let t = self.binary(a, b, "mul", |x, y| x * y)?;
        let rg = self.any_grad(&[a, b]);
        Ok(self.push(t, Op::Mul(a, b), rg))
    }

    pub fn div(&mut self, a: Var, b: Var) -> Result<Var> {
        let t = self.binary(a, b, "div", |x, y| x / y)?;
        let rg = self.any_grad(&[a, b]);
        Ok(self.push(t, Op::Div(a, b), rg))
    }

    pub fn add_scalar(&mut self, a: Var, s: f64) -> Var {
        let s = E::from_f64_lossy(s);
        let t = self.value(a).map(|x| x + s);
        let rg = self.any_grad(&[a]);
        self.push(t, Op::AddScalar(a), rg)
    }

    pub fn mul_scalar(&mut self, a: Var, s: f64) -> Var {
        let se = E::from_f64_lossy(s);
        let t = self.value(a).map(|x| x * se);
        let rg = self.any_grad(&[a]);
        self.push(t, Op::MulScalar(a, s), rg)
    }

    pub fn neg(&mut self, a: Var) -> Var {
        self.mul_scalar(a, -1.0)
    }

    pub fn sqrt(&mut self, a: Var) -> Var {
        let t = self.value(a).map(|x| x.sqrt());
        let rg = self.any_grad(&[a]);
        self.push(t, Op::Sqrt(a), rg)
    }

    pub fn square(&mut self, a: Var) -> Var {
        let t = self.value(a).map(|x| x * x);
        let rg = self.any_grad(&[a]);
        self.push(t, Op::Square(a), rg)
    }

    pub fn abs(&mut self, a: Var) -> Var {
        let t = self.value(a).map(|x| x.abs());
        let rg = self.any_grad(&[a]);
        self.push(t, Op::Abs(a), rg)
    }

    pub fn activation(&mut self, a: Var, kind: Activation) -> Var {
        let v = self.value(a);
        let t = match kind {
            Activation::Relu => v.map(|x| x.max(E::zero())),
            Activation::LeakyRelu(slope) => {
                let s = E::from_f64_lossy(slope);
                v.map(|x| if x > E::zero() { x } else { x * s })
            }
            Activation::Tanh => v.map(|x| x.tanh()),
            Activation::Sigmoid => v.map(sigmoid),
        };
        let rg = self.any_grad(&[a]);
        self.push(t, Op::Act(a, kind), rg)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.activation(a, Activation::Relu)
    }

    pub fn leaky_relu(&mut self, a: Var, slope: f64) -> Var {
        self.activation(a, Activation::LeakyRelu(slope))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.activation(a, Activation::Tanh)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.activation(a, Activation::Sigmoid)
    }

    /// `ln(1 + e^x)`, evaluated without overflow.
    pub fn softplus(&mut self, a: Var) -> Var {
        let t = self
            .value(a)
            .map(|x| x.max(E::zero()) + (-x.abs()).exp().ln_1p());
        let rg = self.any_grad(&[a]);
        self.push(t, Op::Softplus(a), rg)
    }

    /// Broadcasts `a` to `shape`; every dim of `a` must equal the target or be 1.
    pub fn broadcast(&mut self, a: Var, shape: impl Into<Shape>) -> Result<Var> {
        let shape = shape.into();
        let src = self.value(a);
        if src.shape() == shape {
            return Ok(a);
        }
        if !src.shape().broadcasts_to(&shape) {
            return Err(dim_err!("cannot broadcast {} to {shape}", src.shape()));
        }
        let t = expand(src, shape);
        let rg = self.any_grad(&[a]);
        Ok(self.push(t, Op::Broadcast(a), rg))
    }

    /// Sum over the flagged axes, keeping them as size-1 dims.
    pub fn sum_axes(&mut self, a: Var, axes: [bool; 4]) -> Var {
        let t = reduce_sum(self.value(a), axes, 1.0);
        let rg = self.any_grad(&[a]);
        self.push(t, Op::Sum(a), rg)
    }

    pub fn mean_axes(&mut self, a: Var, axes: [bool; 4]) -> Var {
        let s = self.shape(a);
        let count: usize = (0..4).filter(|&i| axes[i]).map(|i| s.0[i]).product();
        let t = reduce_sum(self.value(a), axes, 1.0 / count as f64);
        let rg = self.any_grad(&[a]);
        self.push(t, Op::Mean(a), rg)
    }

    pub fn sum(&mut self, a: Var) -> Var {
        self.sum_axes(a, [true; 4])
    }

    pub fn mean(&mut self, a: Var) -> Var {
        self.mean_axes(a, [true; 4])
    }

    /// Mean over H and W: (B,C,H,W) → (B,C,1,1).
    pub fn global_avg_pool(&mut self, a: Var) -> Var {
        self.mean_axes(a, [false, false, true, true])
    }

    pub fn pad(&mut self, a: Var, mode: PadMode) -> Result<Var> {
        if mode.amount() == 0 {
            return Ok(a);
        }
        let t = conv::pad_forward(self.value(a), mode)?;
        let rg = self.any_grad(&[a]);
        Ok(self.push(t, Op::Pad(a, mode), rg))
    }

    /// 2-D convolution. `weight` is (C_out, C_in, k, k), `bias` has C_out values.
    pub fn conv2d(
        &mut self,
        x: Var,
        weight: Var,
        bias: Option<Var>,
        stride: usize,
        padding: PadMode,
    ) -> Result<Var> {
        let xp = self.pad(x, padding)?;
        let out = conv::conv_forward(
            self.value(xp),
            self.value(weight),
            bias.map(|b| self.value(b)),
            stride,
        )?;
        let mut deps = vec![xp, weight];
        deps.extend(bias);
        let rg = self.any_grad(&deps);
        Ok(self.push(
            out,
            Op::Conv {
                x: xp,
                w: weight,
                b: bias,
                stride,
            },
            rg,
        ))
    }

    pub fn upsample_nearest(&mut self, a: Var, factor: usize) -> Result<Var> {
        if factor == 0 {
            return Err(Error::Argument("upsample factor must be at least 1".into()));
        }
        if factor == 1 {
            return Ok(a);
        }
        let t = conv::upsample_forward(self.value(a), factor);
        let rg = self.any_grad(&[a]);
        Ok(self.push(t, Op::Upsample(a, factor), rg))
    }

    /// Same result as `upsample_nearest(x, 2)` then a 3×3 `conv2d` with
    /// `PadMode::Reflect(1)`, without materializing the upsampled map.
    pub fn upsample_conv3x3(&mut self, x: Var, weight: Var, bias: Option<Var>) -> Result<Var> {
        let out = conv::upconv_forward(
            self.value(x),
            self.value(weight),
            bias.map(|b| self.value(b)),
        )?;
        let mut deps = vec![x, weight];
        deps.extend(bias);
        let rg = self.any_grad(&deps);
        Ok(self.push(out, Op::UpConv { x, w: weight, b: bias }, rg))
    }

    /// Concatenation along the channel axis.
    pub fn concat_channels(&mut self, parts: &[Var]) -> Result<Var> {
        let first = *parts
            .first()
            .ok_or_else(|| dim_err!("concat of zero tensors"))?;
        let [n, _, h, w] = self.shape(first).0;
        let mut total_c = 0;
        for &p in parts {
            let [pn, pc, ph, pw] = self.shape(p).0;
            if (pn, ph, pw) != (n, h, w) {
                return Err(dim_err!(
                    "concat: {} vs {}",
                    self.shape(p),
                    self.shape(first)
                ));
            }
            total_c += pc;
        }
        let mut data = Vec::with_capacity(n * total_c * h * w);
        for i in 0..n {
            for &p in parts {
                let v = self.value(p);
                let len = v.shape().c() * h * w;
                data.extend_from_slice(&v.data()[i * len..(i + 1) * len]);
            }
        }
        let t = Tensor::from_vec([n, total_c, h, w], data)?;
        let rg = self.any_grad(parts);
        Ok(self.push(t, Op::Concat(parts.to_vec()), rg))
    }

    /// Mean softmax cross-entropy of (B,K,1,1) logits against class indices.
    pub fn cross_entropy(&mut self, logits: Var, labels: &[usize]) -> Result<Var> {
        let v = self.value(logits);
        let [b, k, h, w] = v.shape().0;
        if h != 1 || w != 1 || labels.len() != b {
            return Err(dim_err!(
                "cross_entropy expects (B,K,1,1) logits with B labels, got {} and {}",
                v.shape(),
                labels.len()
            ));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= k) {
            return Err(dim_err!("label {bad} out of range for {k} classes"));
        }
        let mut total = 0.0;
        for (i, &l) in labels.iter().enumerate() {
            let row: Vec<f64> = v.data()[i * k..(i + 1) * k]
                .iter()
                .map(|x| x.as_f64())
                .collect();
            total += log_sum_exp(&row) - row[l];
        }
        let t = Tensor::scalar(E::from_f64_lossy(total / b as f64));
        let rg = self.any_grad(&[logits]);
        Ok(self.push(t, Op::CrossEntropy(logits, labels.to_vec()), rg))
    }

    /// Mean absolute difference.
    pub fn l1_distance(&mut self, a: Var, b: Var) -> Result<Var> {
        let d = self.sub(a, b)?;
        let d = self.abs(d);
        Ok(self.mean(d))
    }

    /// Mean squared difference.
    pub fn squared_distance(&mut self, a: Var, b: Var) -> Result<Var> {
        let d = self.sub(a, b)?;
        let d = self.square(d);
        Ok(self.mean(d))
    }

    /// Reverse pass from a single-element node.
    pub fn backward(&self, root: Var) -> Result<Grads<E>> {
        let numel = self.value(root).numel();
        if numel != 1 {
            return Err(Error::Contract(format!(
                "backward needs a scalar root, got {}",
                self.shape(root)
            )));
        }
        let mut grads: Vec<Option<Tensor<E>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[root.0] = Some(Tensor::full(self.shape(root), E::one()));
        for idx in (0..=root.0).rev() {
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            self.propagate(idx, &g, &mut grads)?;
            grads[idx] = Some(g);
        }
        Ok(Grads { grads })
    }

    fn accumulate(&self, grads: &mut [Option<Tensor<E>>], v: Var, g: Tensor<E>) {
        if !self.nodes[v.0].requires_grad {
            return;
        }
        match &mut grads[v.0] {
            Some(existing) => {
                for (e, x) in existing.data_mut().iter_mut().zip(g.data()) {
                    *e = *e + *x;
                }
            }
            slot @ None => *slot = Some(g),
        }
    }

    fn propagate(&self, idx: usize, g: &Tensor<E>, grads: &mut [Option<Tensor<E>>]) -> Result<()> {
        let node = &self.nodes[idx];
        let out = &node.value;
        let rg = |v: Var| self.nodes[v.0].requires_grad;
        match &node.op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                if rg(*a) {
                    self.accumulate(grads, *a, g.clone());
                }
                if rg(*b) {
                    self.accumulate(grads, *b, g.clone());
                }
            }
            Op::Sub(a, b) => {
                if rg(*a) {
                    self.accumulate(grads, *a, g.clone());
                }
                if rg(*b) {
                    self.accumulate(grads, *b, g.map(|x| -x));
                }
            }
            Op::Mul(a, b) => {
                let (va, vb) = (self.value(*a), self.value(*b));
                if rg(*a) {
                    self.accumulate(grads, *a, g.zip_map(vb, |gi, y| gi * y)?);
                }
                if rg(*b) {
                    self.accumulate(grads, *b, g.zip_map(va, |gi, x| gi * x)?);
                }
            }
            Op::Div(a, b) => {
                let vb = self.value(*b);
                if rg(*a) {
                    self.accumulate(grads, *a, g.zip_map(vb, |gi, y| gi / y)?);
                }
                if rg(*b) {
                    // d(a/b)/db = -(a/b)/b
                    let q = out.zip_map(vb, |o, y| o / y)?;
                    self.accumulate(grads, *b, g.zip_map(&q, |gi, r| -gi * r)?);
                }
            }
            Op::AddScalar(a) => self.accumulate(grads, *a, g.clone()),
            Op::MulScalar(a, s) => {
                let s = E::from_f64_lossy(*s);
                self.accumulate(grads, *a, g.map(|x| x * s));
            }
            Op::Sqrt(a) => {
                let two = E::from_f64_lossy(2.0);
                self.accumulate(grads, *a, g.zip_map(out, |gi, o| gi / (two * o))?);
            }
            Op::Square(a) => {
                let two = E::from_f64_lossy(2.0);
                self.accumulate(grads, *a, g.zip_map(self.value(*a), |gi, x| gi * two * x)?);
            }
            Op::Abs(a) => {
                self.accumulate(grads, *a, g.zip_map(self.value(*a), |gi, x| gi * sign(x))?);
            }
            Op::Act(a, kind) => {
                let x = self.value(*a);
                let d = match *kind {
                    Activation::Relu => {
                        g.zip_map(x, |gi, v| if v > E::zero() { gi } else { E::zero() })?
                    }
                    Activation::LeakyRelu(slope) => {
                        let s = E::from_f64_lossy(slope);
                        g.zip_map(x, |gi, v| if v > E::zero() { gi } else { gi * s })?
                    }
                    Activation::Tanh => g.zip_map(out, |gi, o| gi * (E::one() - o * o))?,
                    Activation::Sigmoid => g.zip_map(out, |gi, o| gi * o * (E::one() - o))?,
                };
                self.accumulate(grads, *a, d);
            }
            Op::Softplus(a) => {
                self.accumulate(
                    grads,
                    *a,
                    g.zip_map(self.value(*a), |gi, x| gi * sigmoid(x))?,
                );
            }
            Op::Broadcast(a) => {
                let target = self.shape(*a);
                let axes: [bool; 4] =
                    std::array::from_fn(|i| target.0[i] == 1 && out.shape().0[i] != 1);
                self.accumulate(grads, *a, reduce_sum(g, axes, 1.0));
            }
            Op::Sum(a) | Op::Mean(a) => {
                let in_shape = self.shape(*a);
                let scale = if matches!(node.op, Op::Mean(_)) {
                    out.numel() as f64 / in_shape.numel() as f64
                } else {
                    1.0
                };
                let mut expanded = expand(g, in_shape);
                if scale != 1.0 {
                    let s = E::from_f64_lossy(scale);
                    expanded.data_mut().iter_mut().for_each(|v| *v = *v * s);
                }
                self.accumulate(grads, *a, expanded);
            }
            Op::Pad(a, mode) => {
                self.accumulate(grads, *a, conv::pad_backward(g, self.shape(*a), *mode));
            }
            Op::Conv { x, w, b, stride } => {
                let (dx, dw, db) = conv::conv_backward(
                    self.value(*x),
                    self.value(*w),
                    g,
                    *stride,
                    rg(*x),
                    rg(*w),
                    b.is_some_and(rg),
                )?;
                if let Some(dx) = dx {
                    self.accumulate(grads, *x, dx);
                }
                if let Some(dw) = dw {
                    self.accumulate(grads, *w, dw);
                }
                if let (Some(b), Some(db)) = (b, db) {
                    let db = db.reshape(self.shape(*b))?;
                    self.accumulate(grads, *b, db);
                }
            }
            Op::UpConv { x, w, b } => {
                let (dx, dw, db) = conv::upconv_backward(
                    self.value(*x),
                    self.value(*w),
                    g,
                    rg(*x),
                    rg(*w),
                    b.is_some_and(rg),
                )?;
                if let Some(dx) = dx {
                    self.accumulate(grads, *x, dx);
                }
                if let Some(dw) = dw {
                    self.accumulate(grads, *w, dw);
                }
                if let (Some(b), Some(db)) = (b, db) {
                    let db = db.reshape(self.shape(*b))?;
                    self.accumulate(grads, *b, db);
                }
            }
            Op::Upsample(a, factor) => {
                self.accumulate(
                    grads,
                    *a,
                    conv::upsample_backward(g, self.shape(*a), *factor),
                );
            }
            Op::Concat(parts) => {
                let [n, total_c, h, w] = out.shape().0;
                let mut c0 = 0;
                for &p in parts {
                    let pc = self.shape(p).c();
                    if rg(p) {
                        let mut data = Vec::with_capacity(n * pc * h * w);
                        for i in 0..n {
                            let start = (i * total_c + c0) * h * w;
                            data.extend_from_slice(&g.data()[start..start + pc * h * w]);
                        }
                        self.accumulate(grads, p, Tensor::from_vec([n, pc, h, w], data)?);
                    }
                    c0 += pc;
                }
            }
            Op::CrossEntropy(logits, labels) => {
                let v = self.value(*logits);
                let [b, k, _, _] = v.shape().0;
                let scale = g.item().as_f64() / b as f64;
                let mut d = Vec::with_capacity(b * k);
                for (i, &l) in labels.iter().enumerate() {
                    let row: Vec<f64> = v.data()[i * k..(i + 1) * k]
                        .iter()
                        .map(|x| x.as_f64())
                        .collect();
                    let lse = log_sum_exp(&row);
                    for (j, &r) in row.iter().enumerate() {
                        let p = (r - lse).exp() - if j == l { 1.0 } else { 0.0 };
                        d.push(E::from_f64_lossy(p * scale));
                    }
                }
                self.accumulate(grads, *logits, Tensor::from_vec(v.shape(), d)?);
            }
        }
        Ok(())
    }
}

#[inline]
fn sigmoid<E: Element>(x: E) -> E {
    if x >= E::zero() {
        E::one() / (E::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (E::one() + e)
    }
}

#[inline]
fn sign<E: Element>(x: E) -> E {
    if x > E::zero() {
        E::one()
    } else if x < E::zero() {
        -E::one()
    } else {
        E::zero()
    }
}

fn log_sum_exp(row: &[f64]) -> f64 {
    let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    m + row.iter().map(|r| (r - m).exp()).sum::<f64>().ln()
}

/// Keep-dim sum with f64 accumulation in a fixed traversal order.
fn reduce_sum<E: Element>(x: &Tensor<E>, axes: [bool; 4], scale: f64) -> Tensor<E> {
    let in_shape = x.shape();
    let out_shape = in_shape.reduced(axes);
    let os = out_shape.strides();
    let ms: [usize; 4] = std::array::from_fn(|i| if axes[i] { 0 } else { os[i] });
    let mut acc = vec![0.0f64; out_shape.numel()];
    let [n, c, h, w] = in_shape.0;
    let data = x.data();
    let mut k = 0;
    for i in 0..n {
        for j in 0..c {
            for y in 0..h {
                let base = i * ms[0] + j * ms[1] + y * ms[2];
                if ms[3] == 0 {
                    let mut s = 0.0;
                    for v in &data[k..k + w] {
                        s += v.as_f64();
                    }
                    acc[base] += s;
                } else {
                    for (xx, v) in data[k..k + w].iter().enumerate() {
                        acc[base + xx] += v.as_f64();
                    }
                }
                k += w;
            }
        }
    }
    let data = acc
        .into_iter()
        .map(|v| E::from_f64_lossy(v * scale))
        .collect();
    Tensor::from_vec(out_shape, data).expect("reduced shape")
}

/// Repeats `g` over its size-1 axes to fill `shape`.
fn expand<E: Element>(g: &Tensor<E>, shape: Shape) -> Tensor<E> {
    let gs = g.shape();
    let st = gs.strides();
    let bs: [usize; 4] = std::array::from_fn(|i| if gs.0[i] == 1 { 0 } else { st[i] });
    let [n, c, h, w] = shape.0;
    let src = g.data();
    let mut data = Vec::with_capacity(shape.numel());
    for i in 0..n {
        for j in 0..c {
            for y in 0..h {
                let base = i * bs[0] + j * bs[1] + y * bs[2];
                if bs[3] == 0 {
                    data.extend(std::iter::repeat_n(src[base], w));
                } else {
                    data.extend_from_slice(&src[base..base + w]);
                }
            }
        }
    }
    Tensor::from_vec(shape, data).expect("expanded shape")
}
