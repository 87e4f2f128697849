//! Central finite-difference checks for every differentiable op.

use std::sync::Arc;

use super::{Elementwise, Graph, Tensor, Var};
use crate::hermite::relu_expansion_coefficients;
use crate::hermite::GaussianQuadrature;
use crate::rng::SeededRng;

const STEP: f64 = 1e-4;

fn random(shape: &[usize], rng: &mut SeededRng) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.normal()).collect()).unwrap()
}

/// Compares backward gradients of `build` with central differences for
/// every input; returns the worst relative error.
fn check(inputs: Vec<Tensor>, build: impl Fn(&mut Graph, &[Var]) -> Var) -> f64 {
    let eval = |xs: &[Tensor]| {
        let mut g = Graph::new();
        let vars: Vec<Var> = xs.iter().map(|t| g.param(t.clone())).collect();
        let l = build(&mut g, &vars);
        (g, vars, l)
    };
    let (mut g, vars, l) = eval(&inputs);
    g.backward(l).unwrap();
    let mut worst: f64 = 0.0;
    for (k, v) in vars.iter().enumerate() {
        let analytic = g
            .grad(*v)
            .map(|t| t.data().to_vec())
            .unwrap_or(vec![0.0; inputs[k].len()]);
        for i in 0..inputs[k].len() {
            let mut plus = inputs.clone();
            plus[k].data_mut()[i] += STEP;
            let mut minus = inputs.clone();
            minus[k].data_mut()[i] -= STEP;
            let (gp, _, lp) = eval(&plus);
            let (gm, _, lm) = eval(&minus);
            let fd = (gp.value(lp).item() - gm.value(lm).item()) / (2.0 * STEP);
            let err = (fd - analytic[i]).abs() / fd.abs().max(analytic[i].abs()).max(1.0);
            worst = worst.max(err);
        }
    }
    worst
}

#[derive(Debug)]
struct Softsign;
impl Elementwise for Softsign {
    fn name(&self) -> &str {
        "softsign"
    }
    fn value(&self, x: f64) -> f64 {
        x / (1.0 + x.abs())
    }
    fn derivative(&self, x: f64) -> f64 {
        1.0 / (1.0 + x.abs()).powi(2)
    }
}

/// Reduces a tensor to a scalar with fixed, distinct weights so that every
/// entry's gradient is exercised.
fn weighted_sum(g: &mut Graph, x: Var) -> Var {
    let shape = g.value(x).shape().to_vec();
    let n: usize = shape.iter().product();
    let w = Tensor::new(shape, (0..n).map(|i| 0.3 + 0.17 * i as f64).collect()).unwrap();
    let w = g.constant(w);
    let y = g.mul(x, w).unwrap();
    g.sum(y).unwrap()
}

#[test]
fn dense_layer() {
    let mut rng = SeededRng::new(1);
    let inputs = vec![
        random(&[3, 4], &mut rng),
        random(&[4, 2], &mut rng),
        random(&[2], &mut rng),
    ];
    let err = check(inputs, |g, v| {
        let h = g.matmul(v[0], v[1]).unwrap();
        let h = g.add(h, v[2]).unwrap();
        weighted_sum(g, h)
    });
    assert!(err < 1e-5, "{err}");
}

#[test]
fn feature_normalize_train_and_eval() {
    let mut rng = SeededRng::new(2);
    let inputs = vec![
        random(&[5, 3], &mut rng),
        random(&[3], &mut rng),
        random(&[3], &mut rng),
    ];
    let err = check(inputs.clone(), |g, v| {
        let y = g.feature_normalize(v[0], v[1], v[2], None).unwrap();
        weighted_sum(g, y)
    });
    assert!(err < 1e-5, "{err}");
    let (m, s) = (vec![0.1, -0.2, 0.3], vec![1.5, 0.7, 2.0]);
    let err = check(inputs, |g, v| {
        let y = g
            .feature_normalize(v[0], v[1], v[2], Some((&m, &s)))
            .unwrap();
        weighted_sum(g, y)
    });
    assert!(err < 1e-5, "{err}");
}

#[test]
fn softsign_pointwise() {
    let mut rng = SeededRng::new(3);
    let err = check(vec![random(&[4, 3], &mut rng)], |g, v| {
        let y = g.pointwise(v[0], Arc::new(Softsign)).unwrap();
        weighted_sum(g, y)
    });
    assert!(err < 1e-5, "{err}");
}

#[test]
fn hermite_activation_inputs_and_coefficients() {
    let mut rng = SeededRng::new(4);
    let c = relu_expansion_coefficients(4, &GaussianQuadrature::for_expansions()).unwrap();
    let inputs = vec![random(&[3, 3], &mut rng), Tensor::vector(c).unwrap()];
    let err = check(inputs, |g, v| {
        let y = g.hermite(v[0], v[1]).unwrap();
        weighted_sum(g, y)
    });
    assert!(err < 1e-5, "{err}");
}

#[test]
fn softmax_cross_entropy_soft_targets() {
    let mut rng = SeededRng::new(5);
    let logits = random(&[4, 3], &mut rng);
    let mut p = random(&[4, 3], &mut rng);
    for i in 0..4 {
        let row = p.row_mut(i);
        row.iter_mut().for_each(|v| *v = v.exp());
        let s: f64 = row.iter().sum();
        row.iter_mut().for_each(|v| *v /= s);
    }
    let err = check(vec![logits, p], |g, v| {
        g.softmax_cross_entropy_unchecked(v[0], v[1]).unwrap()
    });
    assert!(err < 1e-5, "{err}");
}

#[test]
fn entropy_and_norms() {
    let mut rng = SeededRng::new(6);
    let p = Tensor::new(
        vec![2, 3],
        (0..6).map(|_| 0.1 + 0.8 * rng.uniform()).collect(),
    )
    .unwrap();
    let err = check(vec![p], |g, v| g.entropy(v[0], 1e-12).unwrap());
    assert!(err < 1e-5, "{err}");
    let err = check(
        vec![random(&[3], &mut rng), random(&[2, 2], &mut rng)],
        |g, v| g.l2_norm(v).unwrap(),
    );
    assert!(err < 1e-5, "{err}");
}

#[test]
fn composite_network() {
    let mut rng = SeededRng::new(7);
    let c = relu_expansion_coefficients(4, &GaussianQuadrature::for_expansions()).unwrap();
    let mut target = Tensor::zeros(&[4, 3]);
    for i in 0..4 {
        target.row_mut(i)[i % 3] = 1.0;
    }
    let inputs = vec![
        random(&[4, 5], &mut rng),
        random(&[5, 6], &mut rng),
        Tensor::full(&[6], 1.0),
        Tensor::zeros(&[6]),
        Tensor::vector(c).unwrap(),
        random(&[6, 3], &mut rng),
        random(&[3], &mut rng),
    ];
    let err = check(inputs, move |g, v| {
        let h = g.matmul(v[0], v[1]).unwrap();
        let h = g.feature_normalize(h, v[2], v[3], None).unwrap();
        let h = g.hermite(h, v[4]).unwrap();
        let h = g.pointwise(h, Arc::new(Softsign)).unwrap();
        let z = g.matmul(h, v[5]).unwrap();
        let z = g.add(z, v[6]).unwrap();
        let t = g.constant(target.clone());
        let ce = g.softmax_cross_entropy(z, t).unwrap();
        let sub = g.sub(z, v[6]).unwrap();
        let extra = g.squared_norm(&[sub]).unwrap();
        let extra = g.scale(extra, 1e-3).unwrap();
        let total = g.add(ce, extra).unwrap();
        g.mean(total).unwrap()
    });
    assert!(err < 1e-5, "{err}");
}
