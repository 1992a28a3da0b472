//! Reverse-mode automatic differentiation over a linear tape.
//!
//! Every operation appends one node holding its forward value and the
//! cached data its backward rule needs. Nodes only reference earlier
//! nodes, so the tape order is a topological order and `backward` walks it
//! once in reverse.

use crate::error::{Error, Result};

use super::tensor::split_axis;
use super::{Scalar, Tensor};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op<T> {
    Leaf,
    MatMul { a: usize, b: usize },
    BatchMatMul { a: usize, b: usize },
    Add { a: usize, b: usize },
    AddBroadcast { a: usize, b: usize },
    Mul { a: usize, b: usize },
    Scale { a: usize, factor: T },
    Permute { a: usize, axes: Vec<usize> },
    Reshape { a: usize },
    Slice { a: usize, axis: usize, start: usize },
    Concat { parts: Vec<usize>, axis: usize },
    Gelu { a: usize },
    LayerNorm { x: usize, gamma: usize, beta: usize, xhat: Vec<T>, inv_std: Vec<T> },
    Softmax { a: usize, axis: usize },
    Mse { pred: usize, target: usize },
    Sum { a: usize },
}

#[derive(Debug)]
struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    requires_grad: bool,
}

/// Recording context for one forward/backward pass.
#[derive(Debug, Default)]
pub struct Tape<T> {
    nodes: Vec<Node<T>>,
}

/// Gradients produced by [`Tape::backward`], indexed by [`Var`].
#[derive(Debug)]
pub struct Gradients<T> {
    grads: Vec<Option<Vec<T>>>,
    shapes: Vec<Vec<usize>>,
}

impl<T: Scalar> Gradients<T> {
    /// Gradient of the loss with respect to `v`; zeros when `v` is unreachable.
    pub fn wrt(&self, v: Var) -> Tensor<T> {
        let shape = self.shapes[v.0].clone();
        match &self.grads[v.0] {
            Some(g) => Tensor::from_parts(shape, g.clone()),
            None => Tensor::zeros(&shape),
        }
    }

    /// Moves the gradient out without copying.
    pub fn take(&mut self, v: Var) -> Tensor<T> {
        let shape = self.shapes[v.0].clone();
        match self.grads[v.0].take() {
            Some(g) => Tensor::from_parts(shape, g),
            None => Tensor::zeros(&shape),
        }
    }
}

pub const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
pub const GELU_A: f64 = 0.044_715;

// 0.5·(1 + tanh u) == sigmoid(2u); one exp is much cheaper than libm tanh.
fn gelu_sigmoid<T: Scalar>(x: T) -> T {
    let u = T::from_f64(GELU_C) * (x + T::from_f64(GELU_A) * x * x * x);
    T::ONE / (T::ONE + (-(u + u)).exp())
}

fn gelu_scalar<T: Scalar>(x: T) -> T {
    x * gelu_sigmoid(x)
}

fn gelu_grad<T: Scalar>(x: T) -> T {
    let c = T::from_f64(GELU_C);
    let a = T::from_f64(GELU_A);
    let s = gelu_sigmoid(x);
    // d/dx [x·s(2u)] = s + x·2s(1-s)·u'
    s + x * (s + s) * (T::ONE - s) * c * (T::ONE + T::from_f64(3.0) * a * x * x)
}

fn permuted_shape(shape: &[usize], axes: &[usize]) -> Vec<usize> {
    axes.iter().map(|&a| shape[a]).collect()
}

fn strides(shape: &[usize]) -> Vec<usize> {
    let mut s = vec![1; shape.len()];
    for i in (0..shape.len().saturating_sub(1)).rev() {
        s[i] = s[i + 1] * shape[i + 1];
    }
    s
}

/// Gathers `data` (laid out as `shape`) into the layout given by `axes`.
fn permute_data<T: Scalar>(data: &[T], shape: &[usize], axes: &[usize]) -> Vec<T> {
    let out_shape = permuted_shape(shape, axes);
    let in_strides = strides(shape);
    // Stride into the input for each output axis.
    let src_strides: Vec<usize> = axes.iter().map(|&a| in_strides[a]).collect();
    let rank = out_shape.len();
    let mut out = Vec::with_capacity(data.len());
    if rank == 0 || data.is_empty() {
        out.extend_from_slice(data);
        return out;
    }
    let (inner_n, inner_s) = (out_shape[rank - 1], src_strides[rank - 1]);
    let mut idx = vec![0usize; rank - 1];
    let mut offset = 0usize;
    for _ in 0..data.len() / inner_n {
        if inner_s == 1 {
            out.extend_from_slice(&data[offset..offset + inner_n]);
        } else {
            out.extend((0..inner_n).map(|j| data[offset + j * inner_s]));
        }
        for d in (0..rank - 1).rev() {
            idx[d] += 1;
            offset += src_strides[d];
            if idx[d] < out_shape[d] {
                break;
            }
            offset -= src_strides[d] * out_shape[d];
            idx[d] = 0;
        }
    }
    out
}

fn accumulate<T: Scalar>(slot: &mut Option<Vec<T>>, delta: Vec<T>) {
    match slot {
        Some(g) => g.iter_mut().zip(delta).for_each(|(g, d)| *g += d),
        None => *slot = Some(delta),
    }
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Records a trainable leaf.
    pub fn param(&mut self, value: Tensor<T>) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// Records a leaf that never receives a gradient (inputs, targets).
    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, vars: &[usize]) -> bool {
        vars.iter().any(|&v| self.nodes[v].requires_grad)
    }

    /// `[m×k] · [k×n] → [m×n]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(Error::shape("matmul", sa, sb));
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let mut out = vec![T::ZERO; m * n];
        T::gemm(
            m,
            k,
            n,
            self.value(a).data(),
            k as isize,
            1,
            self.value(b).data(),
            n as isize,
            1,
            T::ZERO,
            &mut out,
        );
        let rg = self.rg(&[a.0, b.0]);
        Ok(self.push(Tensor::from_parts(vec![m, n], out), Op::MatMul { a: a.0, b: b.0 }, rg))
    }

    /// Batched `[B×m×k] · [B×k×n] → [B×m×n]`.
    pub fn bmm(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.len() != 3 || sb.len() != 3 || sa[0] != sb[0] || sa[2] != sb[1] {
            return Err(Error::shape("bmm", sa, sb));
        }
        let (bt, m, k, n) = (sa[0], sa[1], sa[2], sb[2]);
        let mut out = vec![T::ZERO; bt * m * n];
        let (da, db) = (self.value(a).data(), self.value(b).data());
        for i in 0..bt {
            T::gemm(
                m,
                k,
                n,
                &da[i * m * k..(i + 1) * m * k],
                k as isize,
                1,
                &db[i * k * n..(i + 1) * k * n],
                n as isize,
                1,
                T::ZERO,
                &mut out[i * m * n..(i + 1) * m * n],
            );
        }
        let rg = self.rg(&[a.0, b.0]);
        Ok(self.push(
            Tensor::from_parts(vec![bt, m, n], out),
            Op::BatchMatMul { a: a.0, b: b.0 },
            rg,
        ))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa != sb {
            return Err(Error::shape("add", sa, sb));
        }
        let data = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(&x, &y)| x + y)
            .collect();
        let shape = sa.to_vec();
        let rg = self.rg(&[a.0, b.0]);
        Ok(self.push(Tensor::from_parts(shape, data), Op::Add { a: a.0, b: b.0 }, rg))
    }

    /// Adds `b` to every trailing block of `a`; `b.shape` must be a suffix of `a.shape`.
    pub fn add_broadcast(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sb.len() > sa.len() || sa[sa.len() - sb.len()..] != *sb {
            return Err(Error::shape("add_broadcast", sa, sb));
        }
        let bd = self.value(b).data();
        let mut data = self.value(a).data().to_vec();
        for row in data.chunks_exact_mut(bd.len()) {
            row.iter_mut().zip(bd).for_each(|(x, &y)| *x += y);
        }
        let shape = sa.to_vec();
        let rg = self.rg(&[a.0, b.0]);
        Ok(self.push(
            Tensor::from_parts(shape, data),
            Op::AddBroadcast { a: a.0, b: b.0 },
            rg,
        ))
    }

    /// Elementwise product of equal shapes.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa != sb {
            return Err(Error::shape("mul", sa, sb));
        }
        let data = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(&x, &y)| x * y)
            .collect();
        let shape = sa.to_vec();
        let rg = self.rg(&[a.0, b.0]);
        Ok(self.push(Tensor::from_parts(shape, data), Op::Mul { a: a.0, b: b.0 }, rg))
    }

    pub fn scale(&mut self, a: Var, factor: T) -> Var {
        let value = self.value(a).map(|v| v * factor);
        let rg = self.rg(&[a.0]);
        self.push(value, Op::Scale { a: a.0, factor }, rg)
    }

    /// General axis permutation; output axis `i` is input axis `axes[i]`.
    pub fn permute(&mut self, a: Var, axes: &[usize]) -> Result<Var> {
        let shape = self.shape(a);
        let mut seen = vec![false; shape.len()];
        if axes.len() != shape.len() || axes.iter().any(|&ax| ax >= shape.len() || std::mem::replace(&mut seen[ax], true)) {
            return Err(Error::shape("permute", shape, axes));
        }
        let out_shape = permuted_shape(shape, axes);
        let data = permute_data(self.value(a).data(), shape, axes);
        let rg = self.rg(&[a.0]);
        Ok(self.push(
            Tensor::from_parts(out_shape, data),
            Op::Permute {
                a: a.0,
                axes: axes.to_vec(),
            },
            rg,
        ))
    }

    /// Swaps the last two axes.
    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let rank = self.shape(a).len();
        if rank < 2 {
            return Err(Error::shape("transpose", self.shape(a), &[]));
        }
        let mut axes: Vec<usize> = (0..rank).collect();
        axes.swap(rank - 2, rank - 1);
        self.permute(a, &axes)
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let numel: usize = shape.iter().product();
        if numel != self.value(a).numel() || shape.contains(&0) {
            return Err(Error::shape("reshape", self.shape(a), shape));
        }
        let data = self.value(a).data().to_vec();
        let rg = self.rg(&[a.0]);
        Ok(self.push(Tensor::from_parts(shape.to_vec(), data), Op::Reshape { a: a.0 }, rg))
    }

    /// Takes `len` entries starting at `start` along `axis`.
    pub fn slice(&mut self, a: Var, axis: usize, start: usize, len: usize) -> Result<Var> {
        let shape = self.shape(a).to_vec();
        if axis >= shape.len() || len == 0 || start + len > shape[axis] {
            return Err(Error::shape("slice", &shape, &[axis, start, len]));
        }
        let (outer, n, inner) = split_axis(&shape, axis);
        let src = self.value(a).data();
        let mut data = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            let base = o * n * inner + start * inner;
            data.extend_from_slice(&src[base..base + len * inner]);
        }
        let mut out_shape = shape;
        out_shape[axis] = len;
        let rg = self.rg(&[a.0]);
        Ok(self.push(
            Tensor::from_parts(out_shape, data),
            Op::Slice {
                a: a.0,
                axis,
                start,
            },
            rg,
        ))
    }

    /// Joins tensors along `axis`; all other extents must agree.
    pub fn concat(&mut self, parts: &[Var], axis: usize) -> Result<Var> {
        let first = parts
            .first()
            .ok_or_else(|| Error::Config("concat of zero tensors".into()))?;
        let base = self.shape(*first).to_vec();
        if axis >= base.len() {
            return Err(Error::shape("concat", &base, &[axis]));
        }
        let mut total = 0;
        for p in parts {
            let s = self.shape(*p);
            let compatible = s.len() == base.len()
                && s.iter().zip(&base).enumerate().all(|(i, (x, y))| i == axis || x == y);
            if !compatible {
                return Err(Error::shape("concat", &base, s));
            }
            total += s[axis];
        }
        let (outer, _, inner) = split_axis(&base, axis);
        let mut data = Vec::with_capacity(outer * total * inner);
        for o in 0..outer {
            for p in parts {
                let n = self.shape(*p)[axis];
                let src = self.value(*p).data();
                data.extend_from_slice(&src[o * n * inner..(o + 1) * n * inner]);
            }
        }
        let mut out_shape = base;
        out_shape[axis] = total;
        let idx: Vec<usize> = parts.iter().map(|p| p.0).collect();
        let rg = self.rg(&idx);
        Ok(self.push(
            Tensor::from_parts(out_shape, data),
            Op::Concat { parts: idx, axis },
            rg,
        ))
    }

    /// Tanh-approximation GELU.
    pub fn gelu(&mut self, a: Var) -> Var {
        let value = self.value(a).map(gelu_scalar);
        let rg = self.rg(&[a.0]);
        self.push(value, Op::Gelu { a: a.0 }, rg)
    }

    /// Normalizes each slice along the last axis, then applies `gamma`/`beta`.
    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var, eps: f64) -> Result<Var> {
        let sx = self.shape(x);
        let d = *sx.last().unwrap_or(&0);
        if self.shape(gamma) != [d] || self.shape(beta) != [d] {
            return Err(Error::shape("layer_norm", sx, self.shape(gamma)));
        }
        if eps <= 0.0 {
            return Err(Error::Config(format!("layer_norm eps must be positive, got {eps}")));
        }
        let shape = sx.to_vec();
        let xs = self.value(x).data();
        let g = self.value(gamma).data();
        let b = self.value(beta).data();
        let rows = xs.len() / d;
        let inv_d = T::from_f64(1.0 / d as f64);
        let eps = T::from_f64(eps);
        let mut out = Vec::with_capacity(xs.len());
        let mut xhat = Vec::with_capacity(xs.len());
        let mut inv_std = Vec::with_capacity(rows);
        for row in xs.chunks_exact(d) {
            let mean = row.iter().copied().sum::<T>() * inv_d;
            let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() * inv_d;
            let is = T::ONE / (var + eps).sqrt();
            inv_std.push(is);
            for (j, &v) in row.iter().enumerate() {
                let h = (v - mean) * is;
                xhat.push(h);
                out.push(h * g[j] + b[j]);
            }
        }
        let rg = self.rg(&[x.0, gamma.0, beta.0]);
        Ok(self.push(
            Tensor::from_parts(shape, out),
            Op::LayerNorm {
                x: x.0,
                gamma: gamma.0,
                beta: beta.0,
                xhat,
                inv_std,
            },
            rg,
        ))
    }

    /// Max-subtracted softmax along `axis`.
    pub fn softmax(&mut self, a: Var, axis: usize) -> Result<Var> {
        let shape = self.shape(a).to_vec();
        if axis >= shape.len() {
            return Err(Error::shape("softmax", &shape, &[axis]));
        }
        let (outer, n, inner) = split_axis(&shape, axis);
        let src = self.value(a).data();
        let mut out = vec![T::ZERO; src.len()];
        for o in 0..outer {
            for i in 0..inner {
                let at = |j: usize| o * n * inner + j * inner + i;
                let mut mx = src[at(0)];
                for j in 1..n {
                    mx = mx.max(src[at(j)]);
                }
                let mut total = T::ZERO;
                for j in 0..n {
                    let e = (src[at(j)] - mx).exp();
                    out[at(j)] = e;
                    total += e;
                }
                let inv = T::ONE / total;
                for j in 0..n {
                    out[at(j)] *= inv;
                }
            }
        }
        let rg = self.rg(&[a.0]);
        Ok(self.push(Tensor::from_parts(shape, out), Op::Softmax { a: a.0, axis }, rg))
    }

    /// Mean of squared differences, as a one-element tensor.
    pub fn mse_loss(&mut self, pred: Var, target: Var) -> Result<Var> {
        let (sp, st) = (self.shape(pred), self.shape(target));
        if sp != st {
            return Err(Error::shape("mse_loss", sp, st));
        }
        let p = self.value(pred).data();
        let t = self.value(target).data();
        let total: f64 = p
            .iter()
            .zip(t)
            .map(|(&a, &b)| {
                let d = (a - b).to_f64();
                d * d
            })
            .sum();
        let value = T::from_f64(total / p.len() as f64);
        let rg = self.rg(&[pred.0, target.0]);
        Ok(self.push(
            Tensor::scalar(value),
            Op::Mse {
                pred: pred.0,
                target: target.0,
            },
            rg,
        ))
    }

    /// Sum of all elements.
    pub fn sum(&mut self, a: Var) -> Var {
        let total = self.value(a).data().iter().copied().sum::<T>();
        let rg = self.rg(&[a.0]);
        self.push(Tensor::scalar(total), Op::Sum { a: a.0 }, rg)
    }

    /// Propagates d(loss)/d(node) to every node that requires a gradient.
    pub fn backward(&self, loss: Var) -> Result<Gradients<T>> {
        let loss_shape = self.shape(loss);
        if loss_shape.iter().product::<usize>() != 1 {
            return Err(Error::NonScalarLoss(loss_shape.to_vec()));
        }
        let mut grads: Vec<Option<Vec<T>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(vec![T::ONE]);
        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.backprop_node(node, &g, &mut grads);
            grads[i] = Some(g);
        }
        for (slot, node) in grads.iter_mut().zip(&self.nodes) {
            if !node.requires_grad {
                *slot = None;
            }
        }
        Ok(Gradients {
            grads,
            shapes: self.nodes.iter().map(|n| n.value.shape().to_vec()).collect(),
        })
    }

    fn wants(&self, idx: usize) -> bool {
        self.nodes[idx].requires_grad
    }

    fn backprop_node(&self, node: &Node<T>, g: &[T], grads: &mut [Option<Vec<T>>]) {
        match &node.op {
            Op::Leaf => {}
            Op::MatMul { a, b } => {
                let (av, bv) = (&self.nodes[*a].value, &self.nodes[*b].value);
                let (m, k, n) = (av.shape()[0], av.shape()[1], bv.shape()[1]);
                if self.wants(*a) {
                    // dA = dC · Bᵀ
                    let mut da = vec![T::ZERO; m * k];
                    T::gemm(m, n, k, g, n as isize, 1, bv.data(), 1, n as isize, T::ZERO, &mut da);
                    accumulate(&mut grads[*a], da);
                }
                if self.wants(*b) {
                    // dB = Aᵀ · dC
                    let mut db = vec![T::ZERO; k * n];
                    T::gemm(k, m, n, av.data(), 1, k as isize, g, n as isize, 1, T::ZERO, &mut db);
                    accumulate(&mut grads[*b], db);
                }
            }
            Op::BatchMatMul { a, b } => {
                let (av, bv) = (&self.nodes[*a].value, &self.nodes[*b].value);
                let (bt, m, k, n) = (av.shape()[0], av.shape()[1], av.shape()[2], bv.shape()[2]);
                if self.wants(*a) {
                    let mut da = vec![T::ZERO; bt * m * k];
                    for i in 0..bt {
                        T::gemm(
                            m,
                            n,
                            k,
                            &g[i * m * n..],
                            n as isize,
                            1,
                            &bv.data()[i * k * n..],
                            1,
                            n as isize,
                            T::ZERO,
                            &mut da[i * m * k..(i + 1) * m * k],
                        );
                    }
                    accumulate(&mut grads[*a], da);
                }
                if self.wants(*b) {
                    let mut db = vec![T::ZERO; bt * k * n];
                    for i in 0..bt {
                        T::gemm(
                            k,
                            m,
                            n,
                            &av.data()[i * m * k..],
                            1,
                            k as isize,
                            &g[i * m * n..],
                            n as isize,
                            1,
                            T::ZERO,
                            &mut db[i * k * n..(i + 1) * k * n],
                        );
                    }
                    accumulate(&mut grads[*b], db);
                }
            }
            Op::Add { a, b } => {
                if self.wants(*a) {
                    accumulate(&mut grads[*a], g.to_vec());
                }
                if self.wants(*b) {
                    accumulate(&mut grads[*b], g.to_vec());
                }
            }
            Op::AddBroadcast { a, b } => {
                if self.wants(*a) {
                    accumulate(&mut grads[*a], g.to_vec());
                }
                if self.wants(*b) {
                    let block = self.nodes[*b].value.numel();
                    let mut db = vec![T::ZERO; block];
                    for chunk in g.chunks_exact(block) {
                        db.iter_mut().zip(chunk).for_each(|(d, &v)| *d += v);
                    }
                    accumulate(&mut grads[*b], db);
                }
            }
            Op::Mul { a, b } => {
                let (av, bv) = (self.nodes[*a].value.data(), self.nodes[*b].value.data());
                if self.wants(*a) {
                    accumulate(&mut grads[*a], g.iter().zip(bv).map(|(&d, &y)| d * y).collect());
                }
                if self.wants(*b) {
                    accumulate(&mut grads[*b], g.iter().zip(av).map(|(&d, &x)| d * x).collect());
                }
            }
            Op::Scale { a, factor } => {
                if self.wants(*a) {
                    accumulate(&mut grads[*a], g.iter().map(|&d| d * *factor).collect());
                }
            }
            Op::Permute { a, axes } => {
                if self.wants(*a) {
                    let mut inverse = vec![0; axes.len()];
                    for (i, &ax) in axes.iter().enumerate() {
                        inverse[ax] = i;
                    }
                    let da = permute_data(g, node.value.shape(), &inverse);
                    accumulate(&mut grads[*a], da);
                }
            }
            Op::Reshape { a } => {
                if self.wants(*a) {
                    accumulate(&mut grads[*a], g.to_vec());
                }
            }
            Op::Slice { a, axis, start } => {
                if self.wants(*a) {
                    let in_shape = self.nodes[*a].value.shape();
                    let (outer, n, inner) = split_axis(in_shape, *axis);
                    let len = node.value.shape()[*axis];
                    let mut da = vec![T::ZERO; outer * n * inner];
                    for o in 0..outer {
                        let dst = o * n * inner + start * inner;
                        da[dst..dst + len * inner].copy_from_slice(&g[o * len * inner..(o + 1) * len * inner]);
                    }
                    accumulate(&mut grads[*a], da);
                }
            }
            Op::Concat { parts, axis } => {
                let out_shape = node.value.shape();
                let (outer, total, inner) = split_axis(out_shape, *axis);
                let mut offset = 0;
                for &p in parts {
                    let n = self.nodes[p].value.shape()[*axis];
                    if self.wants(p) {
                        let mut dp = Vec::with_capacity(outer * n * inner);
                        for o in 0..outer {
                            let src = o * total * inner + offset * inner;
                            dp.extend_from_slice(&g[src..src + n * inner]);
                        }
                        accumulate(&mut grads[p], dp);
                    }
                    offset += n;
                }
            }
            Op::Gelu { a } => {
                if self.wants(*a) {
                    let x = self.nodes[*a].value.data();
                    accumulate(&mut grads[*a], g.iter().zip(x).map(|(&d, &v)| d * gelu_grad(v)).collect());
                }
            }
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
            } => {
                let gv = self.nodes[*gamma].value.data();
                let d = gv.len();
                if self.wants(*gamma) {
                    let mut dg = vec![T::ZERO; d];
                    for (gr, hr) in g.chunks_exact(d).zip(xhat.chunks_exact(d)) {
                        for j in 0..d {
                            dg[j] += gr[j] * hr[j];
                        }
                    }
                    accumulate(&mut grads[*gamma], dg);
                }
                if self.wants(*beta) {
                    let mut db = vec![T::ZERO; d];
                    for gr in g.chunks_exact(d) {
                        db.iter_mut().zip(gr).for_each(|(b, &v)| *b += v);
                    }
                    accumulate(&mut grads[*beta], db);
                }
                if self.wants(*x) {
                    let inv_d = T::from_f64(1.0 / d as f64);
                    let mut dx = Vec::with_capacity(g.len());
                    let mut dxhat = vec![T::ZERO; d];
                    for ((gr, hr), &is) in g.chunks_exact(d).zip(xhat.chunks_exact(d)).zip(inv_std) {
                        let mut s1 = T::ZERO;
                        let mut s2 = T::ZERO;
                        for j in 0..d {
                            dxhat[j] = gr[j] * gv[j];
                            s1 += dxhat[j];
                            s2 += dxhat[j] * hr[j];
                        }
                        for j in 0..d {
                            dx.push(is * (dxhat[j] - s1 * inv_d - hr[j] * s2 * inv_d));
                        }
                    }
                    accumulate(&mut grads[*x], dx);
                }
            }
            Op::Softmax { a, axis } => {
                if self.wants(*a) {
                    let y = node.value.data();
                    let (outer, n, inner) = split_axis(node.value.shape(), *axis);
                    let mut da = vec![T::ZERO; y.len()];
                    for o in 0..outer {
                        for i in 0..inner {
                            let at = |j: usize| o * n * inner + j * inner + i;
                            let dot = (0..n).map(|j| g[at(j)] * y[at(j)]).sum::<T>();
                            for j in 0..n {
                                da[at(j)] = y[at(j)] * (g[at(j)] - dot);
                            }
                        }
                    }
                    accumulate(&mut grads[*a], da);
                }
            }
            Op::Mse { pred, target } => {
                let p = self.nodes[*pred].value.data();
                let t = self.nodes[*target].value.data();
                let coef = g[0] * T::from_f64(2.0 / p.len() as f64);
                if self.wants(*pred) {
                    accumulate(&mut grads[*pred], p.iter().zip(t).map(|(&a, &b)| coef * (a - b)).collect());
                }
                if self.wants(*target) {
                    accumulate(&mut grads[*target], p.iter().zip(t).map(|(&a, &b)| coef * (b - a)).collect());
                }
            }
            Op::Sum { a } => {
                if self.wants(*a) {
                    let n = self.nodes[*a].value.numel();
                    accumulate(&mut grads[*a], vec![g[0]; n]);
                }
            }
        }
    }
}
