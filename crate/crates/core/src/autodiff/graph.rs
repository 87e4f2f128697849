//! Tape-based reverse-mode differentiation over dense tensors.
//!
//! A [`Graph`] records every operation in creation order, which is already a
//! topological order. [`Graph::backward`] walks the tape once from the loss
//! back to the first node. Leaf gradients accumulate across calls;
//! intermediate adjoints are rebuilt on every call.

use std::fmt;
use std::sync::Arc;

use super::tensor::{gemm, Tensor};
use crate::error::{Error, Result};
use crate::hermite::HermiteBasis;

/// Handle to a node of a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// A scalar function paired with its exact derivative, applied elementwise.
pub trait Elementwise: fmt::Debug + Send + Sync {
    fn name(&self) -> &str;
    fn value(&self, x: f64) -> f64;
    fn derivative(&self, x: f64) -> f64;
}

/// Epsilon added to the variance in feature normalization.
pub const NORM_EPS: f64 = 1e-5;

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Sum(Var),
    Mean(Var),
    Pointwise(Var, Arc<dyn Elementwise>),
    Hermite {
        x: Var,
        coeffs: Var,
        basis: HermiteBasis,
    },
    FeatureNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        xhat: Vec<f64>,
        inv_std: Vec<f64>,
        batch_mean: Vec<f64>,
        batch_var: Vec<f64>,
        batch_stats: bool,
    },
    SoftmaxCe {
        logits: Var,
        target: Var,
        log_probs: Vec<f64>,
    },
    Entropy {
        p: Var,
        floor: f64,
    },
    SquaredNorm(Vec<Var>),
    Sqrt(Var),
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::MatMul(..) => "matmul",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Mul(..) => "mul",
            Op::Scale(..) => "scale",
            Op::Sum(_) => "sum",
            Op::Mean(_) => "mean",
            Op::Pointwise(..) => "pointwise",
            Op::Hermite { .. } => "hermite",
            Op::FeatureNorm { .. } => "feature_normalize",
            Op::SoftmaxCe { .. } => "softmax_cross_entropy",
            Op::Entropy { .. } => "entropy",
            Op::SquaredNorm(_) => "squared_norm",
            Op::Sqrt(_) => "sqrt",
        }
    }
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    grad: Option<Tensor>,
    op: Op,
    requires_grad: bool,
}

/// Broadcasting rule shared by add/sub/mul.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Broadcast {
    Same,
    /// `b` has the shape of one row of `a` and is repeated over rows.
    Rows,
    /// `b` is a single value.
    Scalar,
}

#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
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

    /// A leaf whose gradient is tracked.
    pub fn param(&mut self, value: Tensor) -> Var {
        self.push_leaf(value, true)
    }

    /// A leaf treated as data.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push_leaf(value, false)
    }

    fn push_leaf(&mut self, value: Tensor, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            grad: None,
            op: Op::Leaf,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn push(&mut self, value: Tensor, op: Op, parents: &[Var]) -> Result<Var> {
        if !value.is_finite() {
            return Err(Error::numeric(
                op.name(),
                "forward pass produced a non-finite value",
            ));
        }
        let requires_grad = parents.iter().any(|p| self.nodes[p.0].requires_grad);
        self.nodes.push(Node {
            value,
            grad: None,
            op,
            requires_grad,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    /// Accumulated gradient of a leaf, if any backward pass reached it.
    pub fn grad(&self, v: Var) -> Option<&Tensor> {
        self.nodes[v.0].grad.as_ref()
    }

    pub fn zero_grads(&mut self) {
        for n in &mut self.nodes {
            n.grad = None;
        }
    }

    fn broadcast(&self, op: &str, a: Var, b: Var) -> Result<Broadcast> {
        let sa = self.value(a).shape();
        let sb = self.value(b).shape();
        if sa == sb {
            Ok(Broadcast::Same)
        } else if sa.len() > 1 && sb == &sa[1..] {
            Ok(Broadcast::Rows)
        } else if sb == [1] {
            Ok(Broadcast::Scalar)
        } else {
            Err(Error::structural(format!(
                "{op}: shapes {sa:?} and {sb:?} are not broadcast-compatible"
            )))
        }
    }

    fn elementwise_binary(
        &mut self,
        a: Var,
        b: Var,
        name: &str,
        f: impl Fn(f64, f64) -> f64,
        op: Op,
    ) -> Result<Var> {
        let mode = self.broadcast(name, a, b)?;
        let av = self.value(a);
        let bv = self.value(b).data();
        let w = bv.len();
        let data: Vec<f64> = av
            .data()
            .iter()
            .enumerate()
            .map(|(i, &x)| {
                let y = match mode {
                    Broadcast::Same => bv[i],
                    Broadcast::Rows => bv[i % w],
                    Broadcast::Scalar => bv[0],
                };
                f(x, y)
            })
            .collect();
        let value = Tensor::new(av.shape().to_vec(), data)?;
        self.push(value, op, &[a, b])
    }

    /// `a + b`, with `b` optionally broadcast over the rows of `a`.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.elementwise_binary(a, b, "add", |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.elementwise_binary(a, b, "sub", |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.elementwise_binary(a, b, "mul", |x, y| x * y, Op::Mul(a, b))
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Result<Var> {
        let av = self.value(a);
        let value = Tensor::new(
            av.shape().to_vec(),
            av.data().iter().map(|x| x * factor).collect(),
        )?;
        self.push(value, Op::Scale(a, factor), &[a])
    }

    /// `a · b` for `a: [n, k]`, `b: [k, m]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.value(a).shape(), self.value(b).shape());
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(Error::structural(format!(
                "matmul: shapes {sa:?} and {sb:?} are incompatible"
            )));
        }
        let (n, k, m) = (sa[0], sa[1], sb[1]);
        let mut out = vec![0.0; n * m];
        gemm(
            n,
            k,
            m,
            self.value(a).data(),
            false,
            self.value(b).data(),
            false,
            &mut out,
            0.0,
        );
        let value = Tensor::matrix(n, m, out)?;
        self.push(value, Op::MatMul(a, b), &[a, b])
    }

    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let s: f64 = self.value(a).data().iter().sum();
        self.push(Tensor::scalar(s), Op::Sum(a), &[a])
    }

    pub fn mean(&mut self, a: Var) -> Result<Var> {
        let v = self.value(a);
        let s: f64 = v.data().iter().sum::<f64>() / v.len() as f64;
        self.push(Tensor::scalar(s), Op::Mean(a), &[a])
    }

    /// Applies `f` elementwise; the backward pass uses `f.derivative`.
    pub fn pointwise(&mut self, a: Var, f: Arc<dyn Elementwise>) -> Result<Var> {
        let av = self.value(a);
        let value = Tensor::new(
            av.shape().to_vec(),
            av.data().iter().map(|&x| f.value(x)).collect(),
        )?;
        let name = f.name().to_string();
        self.push(value, Op::Pointwise(a, f), &[a])
            .map_err(|e| match e {
                Error::Numeric { detail, .. } => Error::Numeric {
                    op: format!("pointwise({name})"),
                    detail,
                },
                other => other,
            })
    }

    /// `Σ_i c_i h_i(x)` elementwise, `coeffs` of shape `[d + 1]`.
    pub fn hermite(&mut self, x: Var, coeffs: Var) -> Result<Var> {
        let c = self.value(coeffs);
        if c.shape().len() != 1 || c.is_empty() {
            return Err(Error::structural(format!(
                "hermite: coefficients must be a vector, got {:?}",
                c.shape()
            )));
        }
        let basis = HermiteBasis::new(c.len() - 1)?;
        let c = c.data();
        let xv = self.value(x);
        let data = xv.data().iter().map(|&z| basis.series(c, z)).collect();
        let value = Tensor::new(xv.shape().to_vec(), data)?;
        self.push(value, Op::Hermite { x, coeffs, basis }, &[x, coeffs])
    }

    /// Per-feature normalization of `x: [n, f]` with scale `gamma` and shift
    /// `beta` (both `[f]`). With `stats = None` the batch statistics are used;
    /// otherwise the given `(mean, var)` are treated as constants.
    pub fn feature_normalize(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        stats: Option<(&[f64], &[f64])>,
    ) -> Result<Var> {
        let xv = self.value(x);
        let shape = xv.shape();
        if shape.len() != 2 {
            return Err(Error::structural(format!(
                "feature_normalize expects [n, f], got {shape:?}"
            )));
        }
        let (n, f) = (shape[0], shape[1]);
        for (name, v) in [("gamma", gamma), ("beta", beta)] {
            if self.value(v).shape() != [f] {
                return Err(Error::structural(format!(
                    "feature_normalize: {name} has shape {:?}, expected [{f}]",
                    self.value(v).shape()
                )));
            }
        }
        let (mean, var, batch_stats) = match stats {
            Some((m, v)) => {
                if m.len() != f || v.len() != f {
                    return Err(Error::structural("feature_normalize: running stats width"));
                }
                (m.to_vec(), v.to_vec(), false)
            }
            None => {
                let mut mean = vec![0.0; f];
                for i in 0..n {
                    for (m, v) in mean.iter_mut().zip(xv.row(i)) {
                        *m += v;
                    }
                }
                mean.iter_mut().for_each(|m| *m /= n as f64);
                let mut var = vec![0.0; f];
                for i in 0..n {
                    for ((s, v), m) in var.iter_mut().zip(xv.row(i)).zip(&mean) {
                        *s += (v - m) * (v - m);
                    }
                }
                var.iter_mut().for_each(|s| *s /= n as f64);
                (mean, var, true)
            }
        };
        let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + NORM_EPS).sqrt()).collect();
        let g = self.value(gamma).data();
        let b = self.value(beta).data();
        let mut xhat = vec![0.0; n * f];
        let mut out = vec![0.0; n * f];
        for i in 0..n {
            let row = xv.row(i);
            for j in 0..f {
                let h = (row[j] - mean[j]) * inv_std[j];
                xhat[i * f + j] = h;
                out[i * f + j] = g[j] * h + b[j];
            }
        }
        let value = Tensor::matrix(n, f, out)?;
        self.push(
            value,
            Op::FeatureNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
                batch_mean: mean,
                batch_var: var,
                batch_stats,
            },
            &[x, gamma, beta],
        )
    }

    /// Batch mean and (biased) variance used by a feature-normalize node.
    pub fn batch_stats(&self, v: Var) -> Option<(&[f64], &[f64])> {
        match &self.nodes[v.0].op {
            Op::FeatureNorm {
                batch_mean,
                batch_var,
                batch_stats: true,
                ..
            } => Some((batch_mean, batch_var)),
            _ => None,
        }
    }

    /// Mean over rows of `−Σ_k p_k log softmax(z)_k`; target rows must lie on
    /// the simplex within `1e−6`.
    pub fn softmax_cross_entropy(&mut self, logits: Var, target: Var) -> Result<Var> {
        let t = self.value(target);
        for i in 0..t.rows() {
            let row = t.row(i);
            let s: f64 = row.iter().sum();
            if (s - 1.0).abs() > 1e-6 || row.iter().any(|p| *p < -1e-12) {
                return Err(Error::Invariant(format!(
                    "cross-entropy target row {i} is not a distribution (sum {s})"
                )));
            }
        }
        self.softmax_cross_entropy_unchecked(logits, target)
    }

    /// As [`Graph::softmax_cross_entropy`] without validating the target.
    pub fn softmax_cross_entropy_unchecked(&mut self, logits: Var, target: Var) -> Result<Var> {
        let (z, t) = (self.value(logits), self.value(target));
        if z.shape().len() != 2 || z.shape() != t.shape() {
            return Err(Error::structural(format!(
                "softmax_cross_entropy: logits {:?} vs target {:?}",
                z.shape(),
                t.shape()
            )));
        }
        let (n, k) = (z.shape()[0], z.shape()[1]);
        let mut log_probs = vec![0.0; n * k];
        let mut loss = 0.0;
        for i in 0..n {
            let row = z.row(i);
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
            for j in 0..k {
                let lp = row[j] - lse;
                log_probs[i * k + j] = lp;
                let p = t.row(i)[j];
                if p != 0.0 {
                    loss -= p * lp;
                }
            }
        }
        loss /= n as f64;
        self.push(
            Tensor::scalar(loss),
            Op::SoftmaxCe {
                logits,
                target,
                log_probs,
            },
            &[logits, target],
        )
    }

    /// Mean Shannon entropy of the rows of `p`, with `0 ln 0 = 0`. The
    /// gradient uses `ln(max(p, floor))` so it stays finite at the boundary.
    pub fn entropy(&mut self, p: Var, floor: f64) -> Result<Var> {
        let pv = self.value(p);
        let n = pv.rows();
        let h: f64 = pv
            .data()
            .iter()
            .filter(|v| **v > 0.0)
            .map(|v| -v * v.ln())
            .sum::<f64>()
            / n as f64;
        self.push(Tensor::scalar(h), Op::Entropy { p, floor }, &[p])
    }

    /// `Σ ‖v‖²` over all given tensors.
    pub fn squared_norm(&mut self, vars: &[Var]) -> Result<Var> {
        let s = vars.iter().map(|v| self.value(*v).squared_norm()).sum();
        self.push(Tensor::scalar(s), Op::SquaredNorm(vars.to_vec()), vars)
    }

    /// Euclidean norm of all given tensors taken together.
    pub fn l2_norm(&mut self, vars: &[Var]) -> Result<Var> {
        let sq = self.squared_norm(vars)?;
        let v = self.value(sq).item().sqrt();
        self.push(Tensor::scalar(v), Op::Sqrt(sq), &[sq])
    }

    /// Reverse pass from a scalar node. Gradients are added into every
    /// gradient-tracking leaf reached.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.value(loss).len() != 1 {
            return Err(Error::structural(format!(
                "backward needs a scalar, got shape {:?}",
                self.value(loss).shape()
            )));
        }
        let mut adj: Vec<Option<Tensor>> = (0..=loss.0).map(|_| None).collect();
        adj[loss.0] = Some(Tensor::scalar(1.0));

        for i in (0..=loss.0).rev() {
            let Some(up) = adj[i].take() else { continue };
            if !self.nodes[i].requires_grad {
                continue;
            }
            if matches!(self.nodes[i].op, Op::Leaf) {
                let node = &mut self.nodes[i];
                match &mut node.grad {
                    Some(g) => g.add_assign(&up),
                    None => node.grad = Some(up),
                }
                continue;
            }
            for (parent, g) in self.local_grads(i, &up)? {
                if !self.nodes[parent.0].requires_grad {
                    continue;
                }
                match &mut adj[parent.0] {
                    Some(acc) => acc.add_assign(&g),
                    slot => *slot = Some(g),
                }
            }
        }
        Ok(())
    }

    fn wants(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn reduce_broadcast(&self, g: Vec<f64>, b: Var, mode: Broadcast) -> Result<Tensor> {
        let shape = self.value(b).shape().to_vec();
        match mode {
            Broadcast::Same => Tensor::new(shape, g),
            Broadcast::Rows => {
                let w = self.value(b).len();
                let mut acc = vec![0.0; w];
                for (i, v) in g.into_iter().enumerate() {
                    acc[i % w] += v;
                }
                Tensor::new(shape, acc)
            }
            Broadcast::Scalar => Tensor::new(shape, vec![g.into_iter().sum()]),
        }
    }

    fn local_grads(&self, i: usize, up: &Tensor) -> Result<Vec<(Var, Tensor)>> {
        let node = &self.nodes[i];
        let u = up.data();
        let mut out = Vec::new();
        match &node.op {
            Op::Leaf => {}
            Op::Add(a, b) | Op::Sub(a, b) => {
                let sign = if matches!(node.op, Op::Sub(..)) {
                    -1.0
                } else {
                    1.0
                };
                if self.wants(*a) {
                    out.push((*a, up.clone()));
                }
                if self.wants(*b) {
                    let mode = self.broadcast("add", *a, *b)?;
                    let g = u.iter().map(|v| sign * v).collect();
                    out.push((*b, self.reduce_broadcast(g, *b, mode)?));
                }
            }
            Op::Mul(a, b) => {
                let mode = self.broadcast("mul", *a, *b)?;
                let av = self.value(*a).data();
                let bv = self.value(*b).data();
                let w = bv.len();
                let b_at = |idx: usize| match mode {
                    Broadcast::Same => bv[idx],
                    Broadcast::Rows => bv[idx % w],
                    Broadcast::Scalar => bv[0],
                };
                if self.wants(*a) {
                    let g = (0..u.len()).map(|k| u[k] * b_at(k)).collect();
                    out.push((*a, Tensor::new(self.value(*a).shape().to_vec(), g)?));
                }
                if self.wants(*b) {
                    let g = (0..u.len()).map(|k| u[k] * av[k]).collect();
                    out.push((*b, self.reduce_broadcast(g, *b, mode)?));
                }
            }
            Op::Scale(a, factor) => {
                let g = u.iter().map(|v| v * factor).collect();
                out.push((*a, Tensor::new(self.value(*a).shape().to_vec(), g)?));
            }
            Op::Sum(a) | Op::Mean(a) => {
                let av = self.value(*a);
                let scale = if matches!(node.op, Op::Mean(_)) {
                    u[0] / av.len() as f64
                } else {
                    u[0]
                };
                out.push((*a, Tensor::full(av.shape(), scale)));
            }
            Op::MatMul(a, b) => {
                let (sa, sb) = (self.value(*a).shape(), self.value(*b).shape());
                let (n, k, m) = (sa[0], sa[1], sb[1]);
                if self.wants(*a) {
                    let mut ga = vec![0.0; n * k];
                    gemm(n, m, k, u, false, self.value(*b).data(), true, &mut ga, 0.0);
                    out.push((*a, Tensor::matrix(n, k, ga)?));
                }
                if self.wants(*b) {
                    let mut gb = vec![0.0; k * m];
                    gemm(k, n, m, self.value(*a).data(), true, u, false, &mut gb, 0.0);
                    out.push((*b, Tensor::matrix(k, m, gb)?));
                }
            }
            Op::Pointwise(a, f) => {
                let av = self.value(*a);
                let g = av
                    .data()
                    .iter()
                    .zip(u)
                    .map(|(&x, &d)| d * f.derivative(x))
                    .collect();
                out.push((*a, Tensor::new(av.shape().to_vec(), g)?));
            }
            Op::Hermite { x, coeffs, basis } => {
                let xv = self.value(*x);
                let c = self.value(*coeffs).data();
                if self.wants(*x) {
                    let g = xv
                        .data()
                        .iter()
                        .zip(u)
                        .map(|(&z, &d)| d * basis.series_with_derivative(c, z).1)
                        .collect();
                    out.push((*x, Tensor::new(xv.shape().to_vec(), g)?));
                }
                if self.wants(*coeffs) {
                    let mut gc = vec![0.0; basis.len()];
                    let mut h = vec![0.0; basis.len()];
                    for (&z, &d) in xv.data().iter().zip(u) {
                        basis.eval_into(z, &mut h);
                        for (acc, hv) in gc.iter_mut().zip(&h) {
                            *acc += d * hv;
                        }
                    }
                    out.push((*coeffs, Tensor::vector(gc)?));
                }
            }
            Op::FeatureNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
                batch_stats,
                ..
            } => {
                let shape = self.value(*x).shape();
                let (n, f) = (shape[0], shape[1]);
                let g = self.value(*gamma).data();
                if self.wants(*gamma) {
                    let mut gg = vec![0.0; f];
                    for i in 0..n {
                        for j in 0..f {
                            gg[j] += u[i * f + j] * xhat[i * f + j];
                        }
                    }
                    out.push((*gamma, Tensor::vector(gg)?));
                }
                if self.wants(*beta) {
                    let mut gb = vec![0.0; f];
                    for i in 0..n {
                        for j in 0..f {
                            gb[j] += u[i * f + j];
                        }
                    }
                    out.push((*beta, Tensor::vector(gb)?));
                }
                if self.wants(*x) {
                    let mut gx = vec![0.0; n * f];
                    if *batch_stats {
                        let mut sum_d = vec![0.0; f];
                        let mut sum_dx = vec![0.0; f];
                        for i in 0..n {
                            for j in 0..f {
                                let d = u[i * f + j] * g[j];
                                sum_d[j] += d;
                                sum_dx[j] += d * xhat[i * f + j];
                            }
                        }
                        let nf = n as f64;
                        for i in 0..n {
                            for j in 0..f {
                                let d = u[i * f + j] * g[j];
                                gx[i * f + j] = inv_std[j] / nf
                                    * (nf * d - sum_d[j] - xhat[i * f + j] * sum_dx[j]);
                            }
                        }
                    } else {
                        for i in 0..n {
                            for j in 0..f {
                                gx[i * f + j] = u[i * f + j] * g[j] * inv_std[j];
                            }
                        }
                    }
                    out.push((*x, Tensor::matrix(n, f, gx)?));
                }
            }
            Op::SoftmaxCe {
                logits,
                target,
                log_probs,
            } => {
                let t = self.value(*target);
                let (n, k) = (t.shape()[0], t.shape()[1]);
                let scale = u[0] / n as f64;
                if self.wants(*logits) {
                    let mut gz = vec![0.0; n * k];
                    for i in 0..n {
                        let row = t.row(i);
                        let mass: f64 = row.iter().sum();
                        for j in 0..k {
                            let idx = i * k + j;
                            gz[idx] = scale * (log_probs[idx].exp() * mass - row[j]);
                        }
                    }
                    out.push((*logits, Tensor::matrix(n, k, gz)?));
                }
                if self.wants(*target) {
                    let gt = log_probs.iter().map(|lp| -scale * lp).collect();
                    out.push((*target, Tensor::matrix(n, k, gt)?));
                }
            }
            Op::Entropy { p, floor } => {
                let pv = self.value(*p);
                let scale = u[0] / pv.rows() as f64;
                let g = pv
                    .data()
                    .iter()
                    .map(|&v| -scale * (v.max(*floor).ln() + 1.0))
                    .collect();
                out.push((*p, Tensor::new(pv.shape().to_vec(), g)?));
            }
            Op::SquaredNorm(vars) => {
                for v in vars {
                    if self.wants(*v) {
                        let t = self.value(*v);
                        let g = t.data().iter().map(|x| 2.0 * x * u[0]).collect();
                        out.push((*v, Tensor::new(t.shape().to_vec(), g)?));
                    }
                }
            }
            Op::Sqrt(a) => {
                let y = node.value.item();
                let g = if y > 0.0 { u[0] / (2.0 * y) } else { 0.0 };
                out.push((*a, Tensor::scalar(g)));
            }
        }
        for (_, g) in &out {
            if !g.is_finite() {
                return Err(Error::numeric(
                    node.op.name(),
                    "backward produced a non-finite gradient",
                ));
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(Debug)]
    struct Square;
    impl Elementwise for Square {
        fn name(&self) -> &str {
            "square"
        }
        fn value(&self, x: f64) -> f64 {
            x * x
        }
        fn derivative(&self, x: f64) -> f64 {
            2.0 * x
        }
    }

    #[test]
    fn matmul_identity() {
        let mut g = Graph::new();
        let a = g.constant(Tensor::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap());
        let i = g.constant(Tensor::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap());
        let c = g.matmul(a, i).unwrap();
        assert_eq!(g.value(c).data(), &[1.0, 2.0, 3.0, 4.0]);
        let bad = g.constant(Tensor::zeros(&[3, 1]));
        assert!(matches!(g.matmul(a, bad), Err(Error::Structural(_))));
    }

    #[test]
    fn derivative_of_square() {
        let mut g = Graph::new();
        let x = g.param(Tensor::scalar(3.0));
        let y = g.pointwise(x, Arc::new(Square)).unwrap();
        g.backward(y).unwrap();
        assert_eq!(g.grad(x).unwrap().item(), 6.0);
    }

    #[test]
    fn backward_requires_scalar() {
        let mut g = Graph::new();
        let x = g.param(Tensor::zeros(&[2]));
        assert!(matches!(g.backward(x), Err(Error::Structural(_))));
    }

    #[test]
    fn uniform_cross_entropy_is_log_k() {
        let mut g = Graph::new();
        let z = g.param(Tensor::full(&[3, 4], 0.7));
        let t = g.constant(Tensor::full(&[3, 4], 0.25));
        let l = g.softmax_cross_entropy(z, t).unwrap();
        assert!((g.value(l).item() - 4f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn cross_entropy_gradient_is_softmax_minus_target() {
        let mut g = Graph::new();
        let logits = vec![0.3, -1.2, 2.0];
        let z = g.param(Tensor::matrix(1, 3, logits.clone()).unwrap());
        let t = g.constant(Tensor::matrix(1, 3, vec![0.0, 1.0, 0.0]).unwrap());
        let l = g.softmax_cross_entropy(z, t).unwrap();
        g.backward(l).unwrap();
        let norm: f64 = logits.iter().map(|v| v.exp()).sum();
        for (j, gz) in g.grad(z).unwrap().data().iter().enumerate() {
            let want = logits[j].exp() / norm - if j == 1 { 1.0 } else { 0.0 };
            assert!((gz - want).abs() < 1e-14);
        }
    }

    #[test]
    fn cross_entropy_rejects_non_distributions() {
        let mut g = Graph::new();
        let z = g.param(Tensor::zeros(&[1, 2]));
        let t = g.constant(Tensor::matrix(1, 2, vec![0.5, 0.6]).unwrap());
        assert!(matches!(
            g.softmax_cross_entropy(z, t),
            Err(Error::Invariant(_))
        ));
    }

    #[test]
    fn non_finite_forward_names_the_op() {
        let mut g = Graph::new();
        let x = g.param(Tensor::scalar(f64::MAX));
        let err = g.pointwise(x, Arc::new(Square)).unwrap_err();
        assert!(err.to_string().contains("square"), "{err}");
    }

    #[test]
    fn repeated_backward_accumulates() {
        let mut g = Graph::new();
        let x = g.param(Tensor::vector(vec![1.0, -2.0]).unwrap());
        let w = g.constant(Tensor::vector(vec![3.0, 0.5]).unwrap());
        let y = g.mul(x, w).unwrap();
        let s = g.sum(y).unwrap();
        g.backward(s).unwrap();
        let once = g.grad(x).unwrap().clone();
        g.backward(s).unwrap();
        let twice = g.grad(x).unwrap();
        for (a, b) in once.data().iter().zip(twice.data()) {
            assert_eq!(2.0 * a, *b);
        }
    }

    #[test]
    fn entropy_of_uniform_and_one_hot() {
        let mut g = Graph::new();
        let u = g.constant(Tensor::full(&[2, 10], 0.1));
        let e = g.entropy(u, 1e-12).unwrap();
        assert!((g.value(e).item() - 10f64.ln()).abs() < 1e-12);
        let mut oh = Tensor::zeros(&[1, 3]);
        oh.data_mut()[1] = 1.0;
        let oh = g.constant(oh);
        let e = g.entropy(oh, 1e-12).unwrap();
        assert_eq!(g.value(e).item(), 0.0);
    }

    #[test]
    fn row_broadcast_reduces_gradient() {
        let mut g = Graph::new();
        let a = g.constant(Tensor::zeros(&[3, 2]));
        let b = g.param(Tensor::vector(vec![1.0, 2.0]).unwrap());
        let c = g.add(a, b).unwrap();
        let s = g.sum(c).unwrap();
        g.backward(s).unwrap();
        assert_eq!(g.grad(b).unwrap().data(), &[3.0, 3.0]);
    }
}
