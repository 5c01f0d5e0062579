//! Reverse-mode automatic differentiation over [`Tensor`]s.
//!
//! A [`Tape`] records every operation in creation order. Because an
//! operation can only reference nodes that already exist, creation order is
//! a topological order and [`Tape::backward`] simply walks it in reverse.
//! Only the operations the reconstruction networks and their losses need are
//! provided.

mod conv;

use std::sync::atomic::{AtomicU32, Ordering};

pub use conv::Padding;
use conv::{conv2d_backward, conv2d_forward, ConvGeometry};

use crate::error::{Error, Result};
use crate::fourier::{fft2c_tensor, ifft2c_tensor};
use crate::tensor::{Real, Shape, Tensor};

static NEXT_TAPE_ID: AtomicU32 = AtomicU32::new(0);

/// Handle to a node on a specific [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var {
    index: usize,
    tape: u32,
}

impl Var {
    pub fn index(&self) -> usize {
        self.index
    }
}

/// Batch-norm behaviour for one call.
#[derive(Debug, Clone, Copy)]
pub enum BatchNormMode<'a, T> {
    /// Normalize by batch statistics.
    Train { eps: T },
    /// Normalize by the supplied running statistics.
    Eval { mean: &'a [T], var: &'a [T], eps: T },
}

/// Per-channel statistics of one training-mode batch-norm call.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchStats<T> {
    pub mean: Vec<T>,
    pub var: Vec<T>,
}

#[derive(Debug)]
enum Op<T> {
    Leaf,
    Conv2d { x: usize, w: usize, b: usize, geo: ConvGeometry },
    BatchNorm { x: usize, scale: usize, shift: usize, mean: Vec<T>, inv_std: Vec<T>, train: bool },
    Relu(usize),
    FreqAct(usize),
    Sigmoid(usize),
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Div(usize, usize),
    Scale(usize, T),
    AddScalar(usize),
    AddTiled { body: usize, skip: usize },
    Lerp { a: usize, b: usize, s: usize },
    Fft2c(usize),
    Ifft2c(usize),
    ComplexAbs(usize),
    Abs(usize),
    Square(usize),
    Ln(usize),
    PowConst(usize, T),
    SumAll(usize),
    MeanAll(usize),
    MeanPerSample(usize),
    BoxMeanValid { x: usize, k: usize },
    AvgPool2(usize),
}

#[derive(Debug)]
struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    needs_grad: bool,
}

/// Operation recorder. One tape serves one forward/backward pass.
#[derive(Debug)]
pub struct Tape<T> {
    id: u32,
    nodes: Vec<Node<T>>,
}

impl<T: Real> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

/// Gradients of a scalar with respect to every node that needed one.
#[derive(Debug)]
pub struct Gradients<T> {
    tape: u32,
    grads: Vec<Option<Tensor<T>>>,
}

impl<T: Real> Gradients<T> {
    pub fn get(&self, v: Var) -> Option<&Tensor<T>> {
        assert_eq!(v.tape, self.tape, "variable belongs to a different tape");
        self.grads[v.index].as_ref()
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor<T>> {
        assert_eq!(v.tape, self.tape, "variable belongs to a different tape");
        self.grads[v.index].take()
    }
}

impl<T: Real> Tape<T> {
    pub fn new() -> Self {
        Tape { id: NEXT_TAPE_ID.fetch_add(1, Ordering::Relaxed), nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn idx(&self, v: Var) -> usize {
        assert_eq!(v.tape, self.id, "variable belongs to a different tape");
        v.index
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, parents: &[usize]) -> Var {
        let needs_grad = parents.iter().any(|&p| self.nodes[p].needs_grad);
        self.nodes.push(Node { value, op, needs_grad });
        Var { index: self.nodes.len() - 1, tape: self.id }
    }

    /// Leaf node. Gradients are only tracked through leaves created with
    /// `requires_grad`.
    pub fn leaf(&mut self, value: Tensor<T>, requires_grad: bool) -> Var {
        self.nodes.push(Node { value, op: Op::Leaf, needs_grad: requires_grad });
        Var { index: self.nodes.len() - 1, tape: self.id }
    }

    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.leaf(value, false)
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[self.idx(v)].value
    }

    pub fn shape(&self, v: Var) -> Shape {
        self.value(v).shape()
    }

    fn binary_shapes(&self, a: Var, b: Var, what: &str) -> Result<(usize, usize)> {
        let (ia, ib) = (self.idx(a), self.idx(b));
        let (sa, sb) = (self.nodes[ia].value.shape(), self.nodes[ib].value.shape());
        if sa != sb {
            return Err(Error::shape(format!("{what}: shape mismatch {sa} vs {sb}")));
        }
        Ok((ia, ib))
    }

    fn unary(&mut self, x: Var, f: impl Fn(T) -> T, op: impl FnOnce(usize) -> Op<T>) -> Var {
        let i = self.idx(x);
        let value = self.nodes[i].value.map(f);
        self.push(value, op(i), &[i])
    }

    /// Same-size 2-D convolution. `w` is `[k, k, c_in, c_out]`, `b` is
    /// `[1, 1, 1, c_out]`.
    pub fn conv2d(&mut self, x: Var, w: Var, b: Var, padding: Padding) -> Result<Var> {
        let (ix, iw, ib) = (self.idx(x), self.idx(w), self.idx(b));
        let geo = ConvGeometry::check(
            self.nodes[ix].value.shape(),
            self.nodes[iw].value.shape(),
            self.nodes[ib].value.shape(),
            padding,
        )?;
        let value =
            conv2d_forward(&geo, &self.nodes[ix].value, &self.nodes[iw].value, &self.nodes[ib].value);
        Ok(self.push(value, Op::Conv2d { x: ix, w: iw, b: ib, geo }, &[ix, iw, ib]))
    }

    /// Per-channel batch normalization with affine `scale`/`shift`
    /// (`[1, 1, 1, c]` each). Returns batch statistics in training mode.
    pub fn batch_norm(
        &mut self,
        x: Var,
        scale: Var,
        shift: Var,
        mode: BatchNormMode<'_, T>,
    ) -> Result<(Var, Option<BatchStats<T>>)> {
        let (ix, is, ih) = (self.idx(x), self.idx(scale), self.idx(shift));
        let shape = self.nodes[ix].value.shape();
        let c = shape.channels();
        let affine = Shape::new(1, 1, 1, c);
        if self.nodes[is].value.shape() != affine || self.nodes[ih].value.shape() != affine {
            return Err(Error::shape(format!("batch norm affine parameters must be {affine}")));
        }
        let count = shape.batch() * shape.height() * shape.width();
        if count == 0 {
            return Err(Error::shape("batch norm over an empty batch"));
        }
        let xs = self.nodes[ix].value.data();
        let (mean, var, train, eps) = match mode {
            BatchNormMode::Train { eps } => {
                let mut mean = vec![T::zero(); c];
                for px in xs.chunks_exact(c) {
                    for (m, &v) in mean.iter_mut().zip(px) {
                        *m += v;
                    }
                }
                let n = T::from_usize_lossy(count);
                mean.iter_mut().for_each(|m| *m = *m / n);
                let mut var = vec![T::zero(); c];
                for px in xs.chunks_exact(c) {
                    for ((s, &v), &m) in var.iter_mut().zip(px).zip(&mean) {
                        let d = v - m;
                        *s += d * d;
                    }
                }
                var.iter_mut().for_each(|s| *s = *s / n);
                (mean, var, true, eps)
            }
            BatchNormMode::Eval { mean, var, eps } => {
                if mean.len() != c || var.len() != c {
                    return Err(Error::shape("batch norm running statistics length mismatch"));
                }
                (mean.to_vec(), var.to_vec(), false, eps)
            }
        };
        let inv_std: Vec<T> = var.iter().map(|&v| T::one() / (v + eps).sqrt()).collect();
        let gamma = self.nodes[is].value.data();
        let beta = self.nodes[ih].value.data();
        let mut out = Tensor::zeros(shape);
        for (o, px) in out.data_mut().chunks_exact_mut(c).zip(xs.chunks_exact(c)) {
            for ch in 0..c {
                o[ch] = gamma[ch] * (px[ch] - mean[ch]) * inv_std[ch] + beta[ch];
            }
        }
        let stats = train.then(|| BatchStats { mean: mean.clone(), var });
        let op = Op::BatchNorm { x: ix, scale: is, shift: ih, mean, inv_std, train };
        Ok((self.push(out, op, &[ix, is, ih]), stats))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        self.unary(x, |v| if v > T::zero() { v } else { T::zero() }, Op::Relu)
    }

    /// `x + relu((x - 1) / 2) + relu(-(x + 1) / 2)`, elementwise.
    pub fn freq_activation(&mut self, x: Var) -> Var {
        self.unary(x, freq_activation_value, Op::FreqAct)
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        self.unary(x, sigmoid_value, Op::Sigmoid)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ia, ib) = self.binary_shapes(a, b, "add")?;
        let value = self.nodes[ia].value.zip_map(&self.nodes[ib].value, |x, y| x + y)?;
        Ok(self.push(value, Op::Add(ia, ib), &[ia, ib]))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ia, ib) = self.binary_shapes(a, b, "sub")?;
        let value = self.nodes[ia].value.zip_map(&self.nodes[ib].value, |x, y| x - y)?;
        Ok(self.push(value, Op::Sub(ia, ib), &[ia, ib]))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ia, ib) = self.binary_shapes(a, b, "mul")?;
        let value = self.nodes[ia].value.zip_map(&self.nodes[ib].value, |x, y| x * y)?;
        Ok(self.push(value, Op::Mul(ia, ib), &[ia, ib]))
    }

    pub fn div(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ia, ib) = self.binary_shapes(a, b, "div")?;
        let value = self.nodes[ia].value.zip_map(&self.nodes[ib].value, |x, y| x / y)?;
        Ok(self.push(value, Op::Div(ia, ib), &[ia, ib]))
    }

    pub fn scale(&mut self, x: Var, k: T) -> Var {
        self.unary(x, |v| v * k, |i| Op::Scale(i, k))
    }

    pub fn add_scalar(&mut self, x: Var, c: T) -> Var {
        self.unary(x, |v| v + c, Op::AddScalar)
    }

    /// `body + skip` where `skip` is repeated along channels to match `body`.
    pub fn add_tiled(&mut self, body: Var, skip: Var) -> Result<Var> {
        let (ib, is) = (self.idx(body), self.idx(skip));
        let (sb, ss) = (self.nodes[ib].value.shape(), self.nodes[is].value.shape());
        if sb.with_channels(ss.channels()) != ss
            || ss.channels() == 0
            || sb.channels() % ss.channels() != 0
        {
            return Err(Error::shape(format!("cannot tile skip {ss} onto body {sb}")));
        }
        let (cb, cs) = (sb.channels(), ss.channels());
        let mut out = self.nodes[ib].value.clone();
        for (o, s) in out.data_mut().chunks_exact_mut(cb).zip(self.nodes[is].value.data().chunks_exact(cs)) {
            for tile in o.chunks_exact_mut(cs) {
                for (a, &v) in tile.iter_mut().zip(s) {
                    *a += v;
                }
            }
        }
        Ok(self.push(out, Op::AddTiled { body: ib, skip: is }, &[ib, is]))
    }

    /// `s * a + (1 - s) * b` with `s` a scalar node.
    pub fn lerp(&mut self, a: Var, b: Var, s: Var) -> Result<Var> {
        let (ia, ib) = self.binary_shapes(a, b, "lerp")?;
        let is = self.idx(s);
        if self.nodes[is].value.shape() != Shape::SCALAR {
            return Err(Error::shape("lerp weight must be a scalar"));
        }
        let w = self.nodes[is].value.data()[0];
        let value = self.nodes[ia].value.zip_map(&self.nodes[ib].value, |x, y| w * x + (T::one() - w) * y)?;
        Ok(self.push(value, Op::Lerp { a: ia, b: ib, s: is }, &[ia, ib, is]))
    }

    pub fn fft2c(&mut self, x: Var) -> Result<Var> {
        let i = self.idx(x);
        let value = fft2c_tensor(&self.nodes[i].value)?;
        Ok(self.push(value, Op::Fft2c(i), &[i]))
    }

    pub fn ifft2c(&mut self, x: Var) -> Result<Var> {
        let i = self.idx(x);
        let value = ifft2c_tensor(&self.nodes[i].value)?;
        Ok(self.push(value, Op::Ifft2c(i), &[i]))
    }

    /// Magnitude of each complex channel pair; halves the channel count.
    pub fn complex_abs(&mut self, x: Var) -> Result<Var> {
        let i = self.idx(x);
        let shape = self.nodes[i].value.shape();
        if shape.channels() % 2 != 0 {
            return Err(Error::shape(format!("complex_abs needs even channels, got {shape}")));
        }
        let data: Vec<T> =
            self.nodes[i].value.data().chunks_exact(2).map(|p| (p[0] * p[0] + p[1] * p[1]).sqrt()).collect();
        let value = Tensor::from_vec(shape.with_channels(shape.channels() / 2), data)?;
        Ok(self.push(value, Op::ComplexAbs(i), &[i]))
    }

    pub fn abs(&mut self, x: Var) -> Var {
        self.unary(x, |v| v.abs(), Op::Abs)
    }

    pub fn square(&mut self, x: Var) -> Var {
        self.unary(x, |v| v * v, Op::Square)
    }

    pub fn ln(&mut self, x: Var) -> Var {
        self.unary(x, |v| v.ln(), Op::Ln)
    }

    /// `max(x, 0)^p`; the gradient is zero where `x <= 0`.
    pub fn pow_const(&mut self, x: Var, p: T) -> Var {
        self.unary(x, move |v| if v > T::zero() { v.powf(p) } else { T::zero() }, |i| Op::PowConst(i, p))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let i = self.idx(x);
        let value = Tensor::scalar(self.nodes[i].value.sum());
        self.push(value, Op::SumAll(i), &[i])
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let i = self.idx(x);
        let t = &self.nodes[i].value;
        let value = Tensor::scalar(t.sum() / T::from_usize_lossy(t.len()));
        self.push(value, Op::MeanAll(i), &[i])
    }

    /// Mean over everything but the batch axis: `[b, h, w, c] -> [b, 1, 1, 1]`.
    pub fn mean_per_sample(&mut self, x: Var) -> Var {
        let i = self.idx(x);
        let t = &self.nodes[i].value;
        let n = t.shape().sample_len();
        let data: Vec<T> =
            t.data().chunks_exact(n.max(1)).map(|s| s.iter().copied().sum::<T>() / T::from_usize_lossy(n)).collect();
        let value = Tensor::from_vec(Shape::new(t.shape().batch(), 1, 1, 1), data).expect("batch-sized");
        self.push(value, Op::MeanPerSample(i), &[i])
    }

    /// Uniform `k x k` window mean over the valid region (no padding).
    pub fn box_mean_valid(&mut self, x: Var, k: usize) -> Result<Var> {
        let i = self.idx(x);
        let t = &self.nodes[i].value;
        let [b, h, w, c] = t.shape().0;
        if k == 0 || h < k || w < k {
            return Err(Error::shape(format!("window {k} does not fit inside {}", t.shape())));
        }
        let (oh, ow) = (h - k + 1, w - k + 1);
        let norm = T::one() / T::from_usize_lossy(k * k);
        let value = Tensor::from_fn(Shape::new(b, oh, ow, c), |[bi, y, x, ci]| {
            let mut acc = T::zero();
            for dy in 0..k {
                for dx in 0..k {
                    acc += t.get([bi, y + dy, x + dx, ci]);
                }
            }
            acc * norm
        });
        Ok(self.push(value, Op::BoxMeanValid { x: i, k }, &[i]))
    }

    /// 2x2 average pooling with stride 2; odd trailing rows/columns are dropped.
    pub fn avg_pool2(&mut self, x: Var) -> Result<Var> {
        let i = self.idx(x);
        let t = &self.nodes[i].value;
        let [b, h, w, c] = t.shape().0;
        if h < 2 || w < 2 {
            return Err(Error::shape(format!("cannot pool {}", t.shape())));
        }
        let q = T::from_f64_lossy(0.25);
        let value = Tensor::from_fn(Shape::new(b, h / 2, w / 2, c), |[bi, y, x, ci]| {
            (t.get([bi, 2 * y, 2 * x, ci])
                + t.get([bi, 2 * y + 1, 2 * x, ci])
                + t.get([bi, 2 * y, 2 * x + 1, ci])
                + t.get([bi, 2 * y + 1, 2 * x + 1, ci]))
                * q
        });
        Ok(self.push(value, Op::AvgPool2(i), &[i]))
    }

    /// Reverse sweep from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients<T>> {
        let li = self.idx(loss);
        if self.nodes[li].value.shape() != Shape::SCALAR {
            return Err(Error::Autodiff(format!(
                "backward needs a scalar loss, got shape {}",
                self.nodes[li].value.shape()
            )));
        }
        let mut grads: Vec<Option<Tensor<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[li] = Some(Tensor::scalar(T::one()));
        for i in (0..=li).rev() {
            if !self.nodes[i].needs_grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.propagate(i, &g, &mut grads)?;
            grads[i] = Some(g);
        }
        Ok(Gradients { tape: self.id, grads })
    }

    fn wants(&self, i: usize) -> bool {
        self.nodes[i].needs_grad
    }

    fn propagate(&self, i: usize, g: &Tensor<T>, grads: &mut [Option<Tensor<T>>]) -> Result<()> {
        let node = &self.nodes[i];
        let val = |j: usize| &self.nodes[j].value;
        let mut acc = |j: usize, delta: Tensor<T>| accumulate(grads, j, delta);
        match &node.op {
            Op::Leaf => {}
            Op::Conv2d { x, w, b, geo } => {
                let want = [self.wants(*x), self.wants(*w), self.wants(*b)];
                let cg = conv2d_backward(geo, val(*x), val(*w), g, want);
                if let Some(t) = cg.x {
                    acc(*x, t);
                }
                if let Some(t) = cg.w {
                    acc(*w, t);
                }
                if let Some(t) = cg.b {
                    acc(*b, t);
                }
            }
            Op::BatchNorm { x, scale, shift, mean, inv_std, train } => {
                let xs = val(*x);
                let shape = xs.shape();
                let c = shape.channels();
                let gamma = val(*scale).data();
                let mut sum_g = vec![T::zero(); c];
                let mut sum_gx = vec![T::zero(); c];
                for (gp, xp) in g.data().chunks_exact(c).zip(xs.data().chunks_exact(c)) {
                    for ch in 0..c {
                        let xhat = (xp[ch] - mean[ch]) * inv_std[ch];
                        sum_g[ch] += gp[ch];
                        sum_gx[ch] += gp[ch] * xhat;
                    }
                }
                if self.wants(*x) {
                    let n = T::from_usize_lossy(shape.batch() * shape.height() * shape.width());
                    let mut dx = Tensor::zeros(shape);
                    for ((dp, gp), xp) in
                        dx.data_mut().chunks_exact_mut(c).zip(g.data().chunks_exact(c)).zip(xs.data().chunks_exact(c))
                    {
                        for ch in 0..c {
                            let k = gamma[ch] * inv_std[ch];
                            dp[ch] = if *train {
                                let xhat = (xp[ch] - mean[ch]) * inv_std[ch];
                                k * (gp[ch] - sum_g[ch] / n - xhat * sum_gx[ch] / n)
                            } else {
                                k * gp[ch]
                            };
                        }
                    }
                    acc(*x, dx);
                }
                let affine = Shape::new(1, 1, 1, c);
                if self.wants(*scale) {
                    acc(*scale, Tensor::from_vec(affine, sum_gx)?);
                }
                if self.wants(*shift) {
                    acc(*shift, Tensor::from_vec(affine, sum_g)?);
                }
            }
            Op::Relu(x) => {
                let d = val(*x).zip_map(g, |v, gv| if v > T::zero() { gv } else { T::zero() })?;
                acc(*x, d);
            }
            Op::FreqAct(x) => {
                let d = val(*x).zip_map(g, |v, gv| gv * freq_activation_slope(v))?;
                acc(*x, d);
            }
            Op::Sigmoid(x) => {
                let d = node.value.zip_map(g, |s, gv| gv * s * (T::one() - s))?;
                acc(*x, d);
            }
            Op::Add(a, b) => {
                if self.wants(*a) {
                    acc(*a, g.clone());
                }
                if self.wants(*b) {
                    acc(*b, g.clone());
                }
            }
            Op::Sub(a, b) => {
                if self.wants(*a) {
                    acc(*a, g.clone());
                }
                if self.wants(*b) {
                    acc(*b, g.map(|v| -v));
                }
            }
            Op::Mul(a, b) => {
                if self.wants(*a) {
                    acc(*a, g.zip_map(val(*b), |gv, bv| gv * bv)?);
                }
                if self.wants(*b) {
                    acc(*b, g.zip_map(val(*a), |gv, av| gv * av)?);
                }
            }
            Op::Div(a, b) => {
                if self.wants(*a) {
                    acc(*a, g.zip_map(val(*b), |gv, bv| gv / bv)?);
                }
                if self.wants(*b) {
                    // d(a/b)/db = -out / b
                    let t = node.value.zip_map(val(*b), |o, bv| -o / bv)?;
                    acc(*b, t.zip_map(g, |t, gv| t * gv)?);
                }
            }
            Op::Scale(x, k) => acc(*x, g.scale(*k)),
            Op::AddScalar(x) => acc(*x, g.clone()),
            Op::AddTiled { body, skip } => {
                if self.wants(*body) {
                    acc(*body, g.clone());
                }
                if self.wants(*skip) {
                    let ss = val(*skip).shape();
                    let (cb, cs) = (g.shape().channels(), ss.channels());
                    let mut d = Tensor::zeros(ss);
                    for (dp, gp) in d.data_mut().chunks_exact_mut(cs).zip(g.data().chunks_exact(cb)) {
                        for tile in gp.chunks_exact(cs) {
                            for (a, &v) in dp.iter_mut().zip(tile) {
                                *a += v;
                            }
                        }
                    }
                    acc(*skip, d);
                }
            }
            Op::Lerp { a, b, s } => {
                let w = val(*s).data()[0];
                if self.wants(*a) {
                    acc(*a, g.scale(w));
                }
                if self.wants(*b) {
                    acc(*b, g.scale(T::one() - w));
                }
                if self.wants(*s) {
                    let mut ds = T::zero();
                    for ((&gv, &av), &bv) in g.data().iter().zip(val(*a).data()).zip(val(*b).data()) {
                        ds += gv * (av - bv);
                    }
                    acc(*s, Tensor::scalar(ds));
                }
            }
            // The centered unitary DFT is orthogonal on the real-pair
            // representation, so its adjoint is its inverse.
            Op::Fft2c(x) => acc(*x, ifft2c_tensor(g)?),
            Op::Ifft2c(x) => acc(*x, fft2c_tensor(g)?),
            Op::ComplexAbs(x) => {
                let xs = val(*x);
                let mut d = Tensor::zeros(xs.shape());
                for ((dp, xp), (&m, &gv)) in d
                    .data_mut()
                    .chunks_exact_mut(2)
                    .zip(xs.data().chunks_exact(2))
                    .zip(node.value.data().iter().zip(g.data()))
                {
                    if m > T::zero() {
                        dp[0] = gv * xp[0] / m;
                        dp[1] = gv * xp[1] / m;
                    }
                }
                acc(*x, d);
            }
            Op::Abs(x) => {
                let d = val(*x).zip_map(g, |v, gv| {
                    if v > T::zero() {
                        gv
                    } else if v < T::zero() {
                        -gv
                    } else {
                        T::zero()
                    }
                })?;
                acc(*x, d);
            }
            Op::Square(x) => {
                let two = T::from_f64_lossy(2.0);
                acc(*x, val(*x).zip_map(g, |v, gv| two * v * gv)?);
            }
            Op::Ln(x) => acc(*x, val(*x).zip_map(g, |v, gv| gv / v)?),
            Op::PowConst(x, p) => {
                let p = *p;
                let d = val(*x).zip_map(g, |v, gv| {
                    if v > T::zero() {
                        gv * p * v.powf(p - T::one())
                    } else {
                        T::zero()
                    }
                })?;
                acc(*x, d);
            }
            Op::SumAll(x) => acc(*x, Tensor::full(val(*x).shape(), g.data()[0])),
            Op::MeanAll(x) => {
                let s = val(*x).shape();
                acc(*x, Tensor::full(s, g.data()[0] / T::from_usize_lossy(s.numel())));
            }
            Op::MeanPerSample(x) => {
                let s = val(*x).shape();
                let n = s.sample_len();
                let inv = T::one() / T::from_usize_lossy(n);
                let mut d = Tensor::zeros(s);
                for (dp, &gv) in d.data_mut().chunks_exact_mut(n.max(1)).zip(g.data()) {
                    dp.fill(gv * inv);
                }
                acc(*x, d);
            }
            Op::BoxMeanValid { x, k } => {
                let s = val(*x).shape();
                let k = *k;
                let norm = T::one() / T::from_usize_lossy(k * k);
                let [b, oh, ow, c] = g.shape().0;
                let mut d = Tensor::zeros(s);
                for bi in 0..b {
                    for y in 0..oh {
                        for xx in 0..ow {
                            for ci in 0..c {
                                let gv = g.get([bi, y, xx, ci]) * norm;
                                for dy in 0..k {
                                    for dx in 0..k {
                                        let o = d.offset([bi, y + dy, xx + dx, ci]);
                                        d.data_mut()[o] += gv;
                                    }
                                }
                            }
                        }
                    }
                }
                acc(*x, d);
            }
            Op::AvgPool2(x) => {
                let s = val(*x).shape();
                let q = T::from_f64_lossy(0.25);
                let [b, oh, ow, c] = g.shape().0;
                let mut d = Tensor::zeros(s);
                for bi in 0..b {
                    for y in 0..oh {
                        for xx in 0..ow {
                            for ci in 0..c {
                                let gv = g.get([bi, y, xx, ci]) * q;
                                for (dy, dx) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
                                    d.set([bi, 2 * y + dy, 2 * xx + dx, ci], gv);
                                }
                            }
                        }
                    }
                }
                acc(*x, d);
            }
        }
        Ok(())
    }
}

fn accumulate<T: Real>(grads: &mut [Option<Tensor<T>>], j: usize, delta: Tensor<T>) {
    match &mut grads[j] {
        Some(existing) => existing.add_assign(&delta),
        slot @ None => *slot = Some(delta),
    }
}

pub(crate) fn freq_activation_value<T: Real>(v: T) -> T {
    let half = T::from_f64_lossy(0.5);
    let relu = |z: T| if z > T::zero() { z } else { T::zero() };
    v + relu((v - T::one()) * half) + relu(-(v + T::one()) * half)
}

fn freq_activation_slope<T: Real>(v: T) -> T {
    if v > T::one() {
        T::from_f64_lossy(1.5)
    } else if v < -T::one() {
        T::from_f64_lossy(0.5)
    } else {
        T::one()
    }
}

pub(crate) fn sigmoid_value<T: Real>(v: T) -> T {
    if v >= T::zero() {
        T::one() / (T::one() + (-v).exp())
    } else {
        let e = v.exp();
        e / (T::one() + e)
    }
}

/// Central finite-difference gradient of a scalar function.
pub fn finite_diff_grad<T: Real>(mut f: impl FnMut(&Tensor<T>) -> T, x: &Tensor<T>, h: T) -> Tensor<T> {
    let two_h = h + h;
    let mut probe = x.clone();
    let mut out = Tensor::zeros(x.shape());
    for i in 0..x.len() {
        let orig = probe.data()[i];
        probe.data_mut()[i] = orig + h;
        let up = f(&probe);
        probe.data_mut()[i] = orig - h;
        let down = f(&probe);
        probe.data_mut()[i] = orig;
        out.data_mut()[i] = (up - down) / two_h;
    }
    out
}

#[cfg(test)]
mod tests;
