//! Probabilists' Hermite polynomials, their normalized family and
//! Gaussian-measure quadrature.
//!
//! `He_n` satisfies `He_{n+1}(x) = x He_n(x) - n He_{n-1}(x)` and is orthogonal
//! under the standard normal density. The normalized family
//! `h_n = He_n / sqrt(n!)` is orthonormal: `E[h_i(X) h_j(X)] = δ_ij` for
//! `X ~ N(0, 1)`. Normalized values are computed by iterating
//! `h_{n+1} = (x h_n - sqrt(n) h_{n-1}) / sqrt(n + 1)` so `n!` never appears.

use crate::error::{Error, Result};
use nalgebra::{DMatrix, SymmetricEigen};

/// Largest degree supported by [`HermiteBasis`].
pub const MAX_DEGREE: usize = 32;

fn check_finite(x: f64) -> Result<()> {
    if x.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!(
            "hermite argument is not finite: {x}"
        )))
    }
}

/// `He_n(x)` by the three-term recurrence.
pub fn eval_unnormalized(n: usize, x: f64) -> Result<f64> {
    check_finite(x)?;
    let (mut prev, mut cur) = (0.0, 1.0);
    for k in 0..n {
        let next = x * cur - k as f64 * prev;
        prev = cur;
        cur = next;
    }
    Ok(cur)
}

/// `h_n(x) = He_n(x) / sqrt(n!)`.
pub fn eval_normalized(n: usize, x: f64) -> Result<f64> {
    check_finite(x)?;
    Ok(normalized_pair(n, x).1)
}

/// `h_n'(x) = sqrt(n) h_{n-1}(x)`, zero for `n = 0`.
pub fn eval_normalized_derivative(n: usize, x: f64) -> Result<f64> {
    check_finite(x)?;
    if n == 0 {
        return Ok(0.0);
    }
    Ok((n as f64).sqrt() * normalized_pair(n - 1, x).1)
}

// (h_{n-1}, h_n), with h_{-1} = 0
fn normalized_pair(n: usize, x: f64) -> (f64, f64) {
    let (mut prev, mut cur) = (0.0, 1.0);
    for k in 0..n {
        let next = (x * cur - (k as f64).sqrt() * prev) / ((k + 1) as f64).sqrt();
        prev = cur;
        cur = next;
    }
    (prev, cur)
}

/// The normalized family `h_0, …, h_d`.
#[derive(Clone, Debug, PartialEq)]
pub struct HermiteBasis {
    degree: usize,
    // sqrt(k) for k = 0..=degree+1
    sqrt_k: Vec<f64>,
}

impl HermiteBasis {
    pub fn new(degree: usize) -> Result<Self> {
        if degree > MAX_DEGREE {
            return Err(Error::Domain(format!(
                "hermite degree {degree} exceeds the supported maximum {MAX_DEGREE}"
            )));
        }
        Ok(Self {
            degree,
            sqrt_k: (0..=degree + 1).map(|k| (k as f64).sqrt()).collect(),
        })
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    /// Number of basis functions, `d + 1`.
    pub fn len(&self) -> usize {
        self.degree + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Writes `h_0(x), …, h_d(x)` into `out[..d + 1]`.
    #[inline]
    pub fn eval_into(&self, x: f64, out: &mut [f64]) {
        out[0] = 1.0;
        if self.degree == 0 {
            return;
        }
        out[1] = x;
        for k in 1..self.degree {
            out[k + 1] = (x * out[k] - self.sqrt_k[k] * out[k - 1]) / self.sqrt_k[k + 1];
        }
    }

    pub fn eval_all(&self, x: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.len()];
        self.eval_into(x, &mut out);
        out
    }

    /// `Σ c_i h_i(x)` and its derivative in `x`, given the coefficient slice.
    #[inline]
    pub fn series_with_derivative(&self, coeffs: &[f64], x: f64) -> (f64, f64) {
        debug_assert_eq!(coeffs.len(), self.len());
        let (mut prev, mut cur) = (0.0, 1.0);
        let mut value = coeffs[0];
        let mut deriv = 0.0;
        for k in 0..self.degree {
            let next = (x * cur - self.sqrt_k[k] * prev) / self.sqrt_k[k + 1];
            // h_{k+1}' = sqrt(k+1) h_k
            deriv += coeffs[k + 1] * self.sqrt_k[k + 1] * cur;
            value += coeffs[k + 1] * next;
            prev = cur;
            cur = next;
        }
        (value, deriv)
    }

    pub fn series(&self, coeffs: &[f64], x: f64) -> f64 {
        self.series_with_derivative(coeffs, x).0
    }
}

/// Which construction produced a [`GaussianQuadrature`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum QuadratureKind {
    /// Gauss rule for the standard normal on the real line; `order` nodes,
    /// exact for polynomials of degree `≤ 2·order − 1`.
    GaussHermite,
    /// Gauss rule for the standard normal restricted to `[0, ∞)`, mirrored
    /// onto `(−∞, 0]`; `2·order` nodes. Exact for functions that are a
    /// polynomial of degree `≤ 2·order − 1` on each half-line, which is what
    /// expansions of kinked activations such as ReLU need.
    HalfRange,
}

/// Nodes and weights for expectations under `N(0, 1)`; weights sum to one.
#[derive(Clone, Debug)]
pub struct GaussianQuadrature {
    order: usize,
    kind: QuadratureKind,
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

/// Order used wherever the caller does not choose one.
pub const DEFAULT_ORDER: usize = 64;

impl GaussianQuadrature {
    pub fn gauss_hermite(order: usize) -> Result<Self> {
        if order == 0 {
            return Err(Error::Domain("quadrature order must be positive".into()));
        }
        let alpha = vec![0.0; order];
        let beta: Vec<f64> = (0..order)
            .map(|k| if k == 0 { 1.0 } else { k as f64 })
            .collect();
        let (nodes, weights) = gauss_from_recurrence(&alpha, &beta);
        Ok(Self {
            order,
            kind: QuadratureKind::GaussHermite,
            nodes,
            weights,
        })
    }

    pub fn half_range(order: usize) -> Result<Self> {
        if order == 0 {
            return Err(Error::Domain("quadrature order must be positive".into()));
        }
        let (alpha, beta) = half_normal_recurrence(order);
        let (half_nodes, half_weights) = gauss_from_recurrence(&alpha, &beta);
        let mut nodes = Vec::with_capacity(2 * order);
        let mut weights = Vec::with_capacity(2 * order);
        for (&x, &w) in half_nodes.iter().zip(&half_weights).rev() {
            nodes.push(-x);
            weights.push(w);
        }
        nodes.extend_from_slice(&half_nodes);
        weights.extend_from_slice(&half_weights);
        Ok(Self {
            order,
            kind: QuadratureKind::HalfRange,
            nodes,
            weights,
        })
    }

    /// The rule used for activation expansions: half-range, order 64.
    pub fn for_expansions() -> Self {
        Self::half_range(DEFAULT_ORDER).expect("positive order")
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn kind(&self) -> QuadratureKind {
        self.kind
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// `E[f(X)]`, failing with the node index if `f` is not finite there.
    pub fn expectation(&self, f: impl Fn(f64) -> f64) -> Result<f64> {
        let mut acc = 0.0;
        for (k, (&x, &w)) in self.nodes.iter().zip(&self.weights).enumerate() {
            let v = f(x);
            if !v.is_finite() {
                return Err(Error::numeric(
                    "quadrature",
                    format!("integrand is {v} at node {k} (x = {x})"),
                ));
            }
            acc += w * v;
        }
        Ok(acc)
    }
}

/// `⟨f, g⟩ = E[f(X) g(X)]` for `X ~ N(0, 1)`.
pub fn inner_product(
    f: impl Fn(f64) -> f64,
    g: impl Fn(f64) -> f64,
    quad: &GaussianQuadrature,
) -> Result<f64> {
    for (k, &x) in quad.nodes().iter().enumerate() {
        let (fx, gx) = (f(x), g(x));
        if !fx.is_finite() || !gx.is_finite() {
            return Err(Error::numeric(
                "inner_product",
                format!("non-finite function value at node {k} (x = {x})"),
            ));
        }
    }
    quad.expectation(|x| f(x) * g(x))
}

/// Coefficients `⟨f, h_i⟩` for `i = 0..=degree`.
pub fn expansion_coefficients(
    f: impl Fn(f64) -> f64,
    degree: usize,
    quad: &GaussianQuadrature,
) -> Result<Vec<f64>> {
    let basis = HermiteBasis::new(degree)?;
    let mut coeffs = vec![0.0; basis.len()];
    let mut h = vec![0.0; basis.len()];
    for (k, (&x, &w)) in quad.nodes().iter().zip(quad.weights()).enumerate() {
        let fx = f(x);
        if !fx.is_finite() {
            return Err(Error::numeric(
                "expansion_coefficients",
                format!("non-finite function value at node {k} (x = {x})"),
            ));
        }
        basis.eval_into(x, &mut h);
        for (c, hi) in coeffs.iter_mut().zip(&h) {
            *c += w * fx * hi;
        }
    }
    Ok(coeffs)
}

/// `ĉ_i = ⟨ReLU, h_i⟩`, the initial coefficients of a Hermite activation.
pub fn relu_expansion_coefficients(degree: usize, quad: &GaussianQuadrature) -> Result<Vec<f64>> {
    if degree > MAX_DEGREE {
        return Err(Error::Domain(format!(
            "hermite degree {degree} exceeds the supported maximum {MAX_DEGREE}"
        )));
    }
    if quad.order() < 2 * degree + 8 {
        return Err(Error::Domain(format!(
            "quadrature order {} is below 2d + 8 = {} for degree {degree}",
            quad.order(),
            2 * degree + 8
        )));
    }
    expansion_coefficients(|x| x.max(0.0), degree, quad)
}

/// `E[(ReLU(X) − Σ ĉ_i h_i(X))²]`, the squared L² error of the degree-`d`
/// ReLU expansion.
pub fn relu_l2_residual(degree: usize, quad: &GaussianQuadrature) -> Result<f64> {
    let coeffs = relu_expansion_coefficients(degree, quad)?;
    let basis = HermiteBasis::new(degree)?;
    quad.expectation(|x| {
        let r = x.max(0.0) - basis.series(&coeffs, x);
        r * r
    })
}

/// Truncation residuals of the Hermite generating function at `(x, t)`.
///
/// `.0` compares `exp(xt − t²/2)` with `Σ_{n≤d} He_n(x) tⁿ / n!`, the standard
/// identity, and vanishes as `d → ∞`. `.1` compares it with
/// `Σ_{n≤d} h_n(x) tⁿ`, which does not converge to it.
pub fn generating_function_residual(x: f64, t: f64, degree: usize) -> (f64, f64) {
    let target = (x * t - 0.5 * t * t).exp();
    let mut standard = 0.0;
    let mut normalized = 0.0;
    // He_n(x) t^n / n! and h_n(x) t^n via their own recurrences
    let (mut he_prev, mut he) = (0.0, 1.0);
    let (mut h_prev, mut h) = (0.0, 1.0);
    let mut t_pow_over_fact = 1.0;
    let mut t_pow = 1.0;
    for n in 0..=degree {
        standard += he * t_pow_over_fact;
        normalized += h * t_pow;
        let k = n as f64;
        let he_next = x * he - k * he_prev;
        he_prev = he;
        he = he_next;
        let h_next = (x * h - k.sqrt() * h_prev) / (k + 1.0).sqrt();
        h_prev = h;
        h = h_next;
        t_pow_over_fact *= t / (k + 1.0);
        t_pow *= t;
    }
    ((target - standard).abs(), (target - normalized).abs())
}

/// Gauss nodes and weights from the recurrence of the monic orthogonal
/// polynomials `p_{k+1} = (x − α_k) p_k − β_k p_{k−1}`, where `β_0` is the
/// total mass of the measure. Golub–Welsch eigenvalues, one Newton polish
/// per node, and Christoffel weights `1 / Σ_j q_j(x)²` with `q_j` orthonormal.
fn gauss_from_recurrence(alpha: &[f64], beta: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let n = alpha.len();
    let mut jacobi = DMatrix::<f64>::zeros(n, n);
    for k in 0..n {
        jacobi[(k, k)] = alpha[k];
        if k + 1 < n {
            let off = beta[k + 1].sqrt();
            jacobi[(k, k + 1)] = off;
            jacobi[(k + 1, k)] = off;
        }
    }
    let mut nodes: Vec<f64> = SymmetricEigen::new(jacobi)
        .eigenvalues
        .iter()
        .copied()
        .collect();
    nodes.sort_by(|a, b| a.partial_cmp(b).expect("finite eigenvalues"));

    for x in nodes.iter_mut() {
        for _ in 0..2 {
            let (p, dp) = monic_with_derivative(alpha, beta, *x);
            if dp != 0.0 && (p / dp).is_finite() {
                *x -= p / dp;
            }
        }
    }

    let weights = nodes
        .iter()
        .map(|&x| {
            let mut sum = 0.0;
            let (mut prev, mut cur) = (0.0, 1.0 / beta[0].sqrt());
            for k in 0..n {
                sum += cur * cur;
                let next_scale = if k + 1 < n { beta[k + 1].sqrt() } else { 1.0 };
                let sqrt_bk = if k == 0 { 0.0 } else { beta[k].sqrt() };
                let next = ((x - alpha[k]) * cur - sqrt_bk * prev) / next_scale;
                prev = cur;
                cur = next;
            }
            1.0 / sum
        })
        .collect();
    (nodes, weights)
}

// p_n(x) and p_n'(x) for the monic family defined by (alpha, beta)
fn monic_with_derivative(alpha: &[f64], beta: &[f64], x: f64) -> (f64, f64) {
    let (mut p_prev, mut p) = (0.0, 1.0);
    let (mut d_prev, mut d) = (0.0, 0.0);
    for k in 0..alpha.len() {
        let b = if k == 0 { 0.0 } else { beta[k] };
        let p_next = (x - alpha[k]) * p - b * p_prev;
        let d_next = p + (x - alpha[k]) * d - b * d_prev;
        p_prev = p;
        p = p_next;
        d_prev = d;
        d = d_next;
    }
    (p, d)
}

/// Recurrence coefficients of the standard normal density restricted to
/// `[0, ∞)` (total mass ½), by the discretized Stieltjes procedure on a
/// composite Gauss–Legendre grid over `[0, 40]`.
fn half_normal_recurrence(order: usize) -> (Vec<f64>, Vec<f64>) {
    const PANELS: usize = 200;
    const PANEL_NODES: usize = 24;
    const UPPER: f64 = 40.0;

    let legendre_alpha = vec![0.0; PANEL_NODES];
    let legendre_beta: Vec<f64> = (0..PANEL_NODES)
        .map(|k| {
            if k == 0 {
                2.0
            } else {
                let k = k as f64;
                k * k / (4.0 * k * k - 1.0)
            }
        })
        .collect();
    let (gl_nodes, gl_weights) = gauss_from_recurrence(&legendre_alpha, &legendre_beta);

    let width = UPPER / PANELS as f64;
    let inv_sqrt_2pi = 1.0 / (2.0 * std::f64::consts::PI).sqrt();
    let mut t = Vec::with_capacity(PANELS * PANEL_NODES);
    let mut u = Vec::with_capacity(PANELS * PANEL_NODES);
    for p in 0..PANELS {
        let lo = p as f64 * width;
        for (&z, &w) in gl_nodes.iter().zip(&gl_weights) {
            let x = lo + 0.5 * width * (z + 1.0);
            t.push(x);
            u.push(0.5 * width * w * inv_sqrt_2pi * (-0.5 * x * x).exp());
        }
    }

    let mass: f64 = u.iter().sum();
    let mut alpha = Vec::with_capacity(order);
    let mut beta = Vec::with_capacity(order);
    beta.push(mass);
    let mut q_prev = vec![0.0; t.len()];
    let mut q: Vec<f64> = vec![1.0 / mass.sqrt(); t.len()];
    for k in 0..order {
        let a: f64 = (0..t.len()).map(|i| u[i] * t[i] * q[i] * q[i]).sum();
        alpha.push(a);
        if k + 1 == order {
            break;
        }
        let sqrt_bk = if k == 0 { 0.0 } else { beta[k].sqrt() };
        let r: Vec<f64> = (0..t.len())
            .map(|i| (t[i] - a) * q[i] - sqrt_bk * q_prev[i])
            .collect();
        let norm2: f64 = (0..t.len()).map(|i| u[i] * r[i] * r[i]).sum();
        beta.push(norm2);
        let norm = norm2.sqrt();
        q_prev = q;
        q = r.into_iter().map(|v| v / norm).collect();
    }
    (alpha, beta)
}
