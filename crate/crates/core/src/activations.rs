//! Hermite activation, softsign and baseline activations.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use crate::autodiff::{Elementwise, Tensor};
use crate::error::{Error, Result};
use crate::hermite::{relu_expansion_coefficients, GaussianQuadrature, HermiteBasis};

/// Degree used when none is configured.
pub const DEFAULT_DEGREE: usize = 4;

/// `x / (1 + |x|)`. For `|x|` beyond 2^53 the quotient rounds to ±1, so the
/// result is held at the largest double below 1 in magnitude.
pub fn softsign(x: f64) -> f64 {
    const BELOW_ONE: f64 = 1.0 - f64::EPSILON / 2.0;
    (x / (1.0 + x.abs())).clamp(-BELOW_ONE, BELOW_ONE)
}

const SELU_ALPHA: f64 = 1.673_263_242_354_377_3;
const SELU_SCALE: f64 = 1.050_700_987_355_480_5;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Pointwise {
    Identity,
    Relu,
    Elu,
    Selu,
    Sigmoid,
    Softsign,
}

impl Elementwise for Pointwise {
    fn name(&self) -> &str {
        match self {
            Pointwise::Identity => "identity",
            Pointwise::Relu => "relu",
            Pointwise::Elu => "elu",
            Pointwise::Selu => "selu",
            Pointwise::Sigmoid => "sigmoid",
            Pointwise::Softsign => "softsign",
        }
    }

    fn value(&self, x: f64) -> f64 {
        match self {
            Pointwise::Identity => x,
            Pointwise::Relu => x.max(0.0),
            Pointwise::Elu => {
                if x > 0.0 {
                    x
                } else {
                    x.exp_m1()
                }
            }
            Pointwise::Selu => SELU_SCALE * if x > 0.0 { x } else { SELU_ALPHA * x.exp_m1() },
            Pointwise::Sigmoid => {
                if x >= 0.0 {
                    1.0 / (1.0 + (-x).exp())
                } else {
                    let e = x.exp();
                    e / (1.0 + e)
                }
            }
            Pointwise::Softsign => softsign(x),
        }
    }

    fn derivative(&self, x: f64) -> f64 {
        match self {
            Pointwise::Identity => 1.0,
            Pointwise::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Pointwise::Elu => {
                if x > 0.0 {
                    1.0
                } else {
                    x.exp()
                }
            }
            Pointwise::Selu => SELU_SCALE * if x > 0.0 { 1.0 } else { SELU_ALPHA * x.exp() },
            Pointwise::Sigmoid => {
                let s = self.value(x);
                s * (1.0 - s)
            }
            Pointwise::Softsign => {
                let d = 1.0 + x.abs();
                1.0 / (d * d)
            }
        }
    }
}

impl Pointwise {
    pub fn arc(self) -> Arc<dyn Elementwise> {
        Arc::new(self)
    }
}

/// Activation choice for a network.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    /// Trainable Hermite expansion of the given degree followed by softsign.
    Hermite {
        degree: usize,
    },
    Relu,
    Elu,
    Selu,
    Sigmoid,
    /// Softsign alone (the degree-zero ablation).
    SoftsignOnly,
    Identity,
}

impl Activation {
    pub fn degree(self) -> Option<usize> {
        match self {
            Activation::Hermite { degree } => Some(degree),
            _ => None,
        }
    }

    /// The fixed pointwise function for non-Hermite activations.
    pub fn pointwise(self) -> Option<Pointwise> {
        match self {
            Activation::Hermite { .. } => None,
            Activation::Relu => Some(Pointwise::Relu),
            Activation::Elu => Some(Pointwise::Elu),
            Activation::Selu => Some(Pointwise::Selu),
            Activation::Sigmoid => Some(Pointwise::Sigmoid),
            Activation::SoftsignOnly => Some(Pointwise::Softsign),
            Activation::Identity => Some(Pointwise::Identity),
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Activation::Hermite { degree } => write!(f, "hermite({degree})"),
            Activation::Relu => f.write_str("relu"),
            Activation::Elu => f.write_str("elu"),
            Activation::Selu => f.write_str("selu"),
            Activation::Sigmoid => f.write_str("sigmoid"),
            Activation::SoftsignOnly => f.write_str("softsign_only"),
            Activation::Identity => f.write_str("identity"),
        }
    }
}

impl FromStr for Activation {
    type Err = Error;

    /// Accepts `hermite`, `hermite(6)`, `hermite:6` and the baseline names.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        if let Some(rest) = s.strip_prefix("hermite") {
            let digits = rest.trim_matches(|c| matches!(c, '(' | ')' | ':' | ' '));
            let degree = if digits.is_empty() {
                DEFAULT_DEGREE
            } else {
                digits
                    .parse()
                    .map_err(|_| Error::Config(format!("bad hermite degree in {s:?}")))?
            };
            return Ok(Activation::Hermite { degree });
        }
        Ok(match s.as_str() {
            "relu" => Activation::Relu,
            "elu" => Activation::Elu,
            "selu" => Activation::Selu,
            "sigmoid" => Activation::Sigmoid,
            "softsign_only" | "softsign" => Activation::SoftsignOnly,
            "identity" | "linear" => Activation::Identity,
            _ => return Err(Error::Config(format!("unknown activation {s:?}"))),
        })
    }
}

/// How Hermite coefficients are initialised.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CoeffInit {
    /// Projection of ReLU onto the basis.
    Relu,
    /// `c_i = (−1)^i`.
    Alternating,
}

impl FromStr for CoeffInit {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "relu" => Ok(CoeffInit::Relu),
            "alternating" => Ok(CoeffInit::Alternating),
            other => Err(Error::Config(format!("unknown coefficient init {other:?}"))),
        }
    }
}

/// Initial coefficient vector of length `degree + 1`.
pub fn initial_coefficients(degree: usize, init: CoeffInit) -> Result<Vec<f64>> {
    match init {
        CoeffInit::Relu => {
            relu_expansion_coefficients(degree, &GaussianQuadrature::for_expansions())
        }
        CoeffInit::Alternating => {
            HermiteBasis::new(degree)?;
            Ok((0..=degree)
                .map(|i| if i % 2 == 0 { 1.0 } else { -1.0 })
                .collect())
        }
    }
}

/// A Hermite activation layer outside any graph.
#[derive(Clone, Debug, PartialEq)]
pub struct HermiteActivation {
    basis: HermiteBasis,
    pub coeffs: Vec<f64>,
}

impl HermiteActivation {
    /// ReLU-initialised layer of the given degree.
    pub fn new(degree: usize) -> Result<Self> {
        Self::with_coefficients(initial_coefficients(degree, CoeffInit::Relu)?)
    }

    pub fn with_coefficients(coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.is_empty() {
            return Err(Error::structural("need at least one coefficient"));
        }
        Ok(Self {
            basis: HermiteBasis::new(coeffs.len() - 1)?,
            coeffs,
        })
    }

    pub fn degree(&self) -> usize {
        self.basis.degree()
    }

    pub fn reinitialize(&mut self) -> Result<()> {
        self.coeffs = initial_coefficients(self.degree(), CoeffInit::Relu)?;
        Ok(())
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.basis.series(&self.coeffs, x)
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        hermite_forward(x, &self.coeffs)
    }
}

/// Elementwise `Σ_i c_i h_i(x)`.
pub fn hermite_forward(x: &Tensor, coeffs: &[f64]) -> Result<Tensor> {
    if !x.is_finite() {
        return Err(Error::Domain(
            "hermite activation input is not finite".into(),
        ));
    }
    let basis = HermiteBasis::new(coeffs.len().saturating_sub(1))?;
    let data: Vec<f64> = x.data().iter().map(|&v| basis.series(coeffs, v)).collect();
    if data.iter().any(|v| !v.is_finite()) {
        return Err(Error::numeric("hermite", "activation output overflowed"));
    }
    Tensor::new(x.shape().to_vec(), data)
}

/// `(grad_x, grad_c)` for upstream gradient `up`; `grad_c` is summed over all
/// elements.
pub fn hermite_backward(x: &Tensor, coeffs: &[f64], up: &Tensor) -> Result<(Tensor, Vec<f64>)> {
    if x.shape() != up.shape() {
        return Err(Error::structural(
            "hermite_backward: upstream shape mismatch",
        ));
    }
    let basis = HermiteBasis::new(coeffs.len().saturating_sub(1))?;
    let mut gc = vec![0.0; coeffs.len()];
    let mut h = vec![0.0; coeffs.len()];
    let mut gx = Vec::with_capacity(x.len());
    for (&v, &u) in x.data().iter().zip(up.data()) {
        gx.push(u * basis.series_with_derivative(coeffs, v).1);
        basis.eval_into(v, &mut h);
        for (g, hv) in gc.iter_mut().zip(&h) {
            *g += u * hv;
        }
    }
    if gx.iter().chain(&gc).any(|v| !v.is_finite()) {
        return Err(Error::numeric("hermite", "gradient overflowed"));
    }
    Ok((Tensor::new(x.shape().to_vec(), gx)?, gc))
}
