//! Landscape probes, active-unit census, and the output-gap bound and
//! confidence calculators.

use std::fmt::Write as _;

use crate::autodiff::{OptimizerState, Tensor};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::hermite::{eval_unnormalized, HermiteBasis};
use crate::models::{Loss, Model};
use crate::rng::SeededRng;

/// Loss values `L(w − η∇L)` along one gradient direction.
#[derive(Clone, Debug, PartialEq)]
pub struct LandscapeProbe {
    pub etas: Vec<f64>,
    pub losses: Vec<f64>,
}

/// The grid `{0.05·k : k = 1..=count}`.
pub fn default_eta_grid(count: usize) -> Vec<f64> {
    (1..=count).map(|k| 0.05 * k as f64).collect()
}

fn batch_loss(model: &Model, x: &Tensor, target: &Tensor, loss: Loss) -> Result<f64> {
    let step = model.loss_graph(x, target, loss)?;
    Ok(step.graph.value(step.loss).item())
}

/// Evaluates the training loss at `w − η∇L` for every `η` on a copy of the
/// model. Non-finite losses are recorded as `+∞`.
pub fn loss_along_gradient(
    model: &Model,
    x: &Tensor,
    target: &Tensor,
    loss: Loss,
    etas: &[f64],
) -> Result<LandscapeProbe> {
    if etas.is_empty() {
        return Err(Error::structural("empty eta grid"));
    }
    if etas.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::structural("eta grid must be sorted ascending"));
    }
    let mut step = model.loss_graph(x, target, loss)?;
    step.graph.backward(step.loss)?;
    let mut base = model.clone();
    base.params_mut().zero_grads();
    base.params_mut().accumulate_grads(&step.graph, &step.bound);
    let mut losses = Vec::with_capacity(etas.len());
    for &eta in etas {
        let mut probe = base.clone();
        for p in probe.params_mut().iter_mut().filter(|p| p.trainable) {
            let g = p.grad.data().to_vec();
            for (w, g) in p.value.data_mut().iter_mut().zip(g) {
                *w -= eta * g;
            }
        }
        let value = match batch_loss(&probe, x, target, loss) {
            Ok(v) if v.is_finite() => v,
            Ok(_) | Err(Error::Numeric { .. }) => f64::INFINITY,
            Err(e) => return Err(e),
        };
        losses.push(value);
    }
    Ok(LandscapeProbe {
        etas: etas.to_vec(),
        losses,
    })
}

fn l2_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// `max_t ‖g_{t+1} − g_t‖ / ‖w_{t+1} − w_t‖`, skipping pairs that did not move.
pub fn max_beta_smoothness(weights: &[Vec<f64>], grads: &[Vec<f64>]) -> Result<f64> {
    if weights.len() < 2 || weights.len() != grads.len() {
        return Err(Error::structural(
            "need at least two matching weight and gradient snapshots",
        ));
    }
    let mut best: Option<f64> = None;
    for t in 0..weights.len() - 1 {
        let dw = l2_distance(&weights[t + 1], &weights[t]);
        if dw == 0.0 {
            continue;
        }
        let r = l2_distance(&grads[t + 1], &grads[t]) / dw;
        best = Some(best.map_or(r, |b| b.max(r)));
    }
    best.ok_or_else(|| Error::Undefined("every weight displacement is zero".into()))
}

/// `‖w_t − w_0‖` for every snapshot.
pub fn weight_deviation(weights: &[Vec<f64>]) -> Result<Vec<f64>> {
    let first = weights
        .first()
        .ok_or_else(|| Error::structural("need at least one snapshot"))?;
    Ok(weights.iter().map(|w| l2_distance(w, first)).collect())
}

/// Weights, gradients and losses recorded along a training run.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Trajectory {
    pub weights: Vec<Vec<f64>>,
    pub grads: Vec<Vec<f64>>,
    pub losses: Vec<f64>,
}

fn flat_trainable(model: &Model) -> Vec<f64> {
    model
        .params()
        .iter()
        .filter(|p| p.trainable)
        .flat_map(|p| p.value.data().iter().copied())
        .collect()
}

/// Takes `steps` optimizer steps on consecutive minibatches (order from
/// `seed`), recording the weights and the gradient at each visited point.
pub fn record_trajectory(
    model: &mut Model,
    data: &Dataset,
    opt: &mut OptimizerState,
    steps: usize,
    batch_size: usize,
    seed: u64,
) -> Result<Trajectory> {
    let targets = data.one_hot();
    let mut rng = SeededRng::new(seed);
    let mut order = rng.permutation(data.len());
    let mut pos = 0;
    let mut traj = Trajectory::default();
    for _ in 0..steps {
        if pos + batch_size > order.len() {
            rng.shuffle(&mut order);
            pos = 0;
        }
        let idx = &order[pos..pos + batch_size.min(order.len())];
        pos += idx.len();
        let x = data.features.select_rows(idx);
        let t = targets.select_rows(idx);
        let mut step = model.loss_graph(&x, &t, Loss::CrossEntropy)?;
        step.graph.backward(step.loss)?;
        model.params_mut().zero_grads();
        model
            .params_mut()
            .accumulate_grads(&step.graph, &step.bound);
        traj.weights.push(flat_trainable(model));
        traj.grads.push(model.params().flat_grads());
        traj.losses.push(step.graph.value(step.loss).item());
        opt.step(model.params_mut())?;
        model.commit_running_stats(&step.graph, &step.forward);
    }
    Ok(traj)
}

/// Per hidden activation layer, whether each unit's output exceeds `1e−12`
/// in magnitude on more than a fraction `tau` of the rows of `x`.
pub fn active_units(model: &Model, x: &Tensor, tau: f64) -> Result<Vec<Vec<bool>>> {
    if !(0.0..1.0).contains(&tau) {
        return Err(Error::Domain(format!("tau must lie in [0, 1), got {tau}")));
    }
    let (_, hidden) = model.predict_with_hidden(x)?;
    let n = x.rows() as f64;
    Ok(hidden
        .iter()
        .map(|h| {
            let mut counts = vec![0usize; h.row_len()];
            for i in 0..h.rows() {
                for (c, v) in counts.iter_mut().zip(h.row(i)) {
                    if v.abs() > 1e-12 {
                        *c += 1;
                    }
                }
            }
            counts.iter().map(|c| *c as f64 > tau * n).collect()
        })
        .collect())
}

/// Fraction of active units per hidden activation layer.
pub fn active_unit_census(model: &Model, x: &Tensor, tau: f64) -> Result<Vec<f64>> {
    Ok(active_units(model, x, tau)?
        .iter()
        .map(|layer| layer.iter().filter(|a| **a).count() as f64 / layer.len() as f64)
        .collect())
}

/// Single-hidden-layer network `f(x) = A σ(W x)` with a Hermite activation.
#[derive(Clone, Debug, PartialEq)]
pub struct BoundInputs {
    /// Output weights `[K, J]`.
    pub a: Tensor,
    /// Hidden weights `[J, D]`, one row per unit.
    pub w: Tensor,
    pub coeffs: Vec<f64>,
    pub p: f64,
    pub q: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Lemma1 {
    pub bound: f64,
    pub lhs_max: f64,
    pub alpha: f64,
    pub beta: f64,
    pub constant: f64,
}

/// `ℓ_p` norm, with `p = ∞` giving the max norm.
pub fn lp_norm(v: &[f64], p: f64) -> f64 {
    if p.is_infinite() {
        v.iter().fold(0.0, |m, x| m.max(x.abs()))
    } else if p == 1.0 {
        v.iter().map(|x| x.abs()).sum()
    } else if p == 2.0 {
        v.iter().map(|x| x * x).sum::<f64>().sqrt()
    } else {
        v.iter().map(|x| x.abs().powf(p)).sum::<f64>().powf(1.0 / p)
    }
}

/// `ν_n = Σ_k |[x^k] He_n| / √n!`, so that `|h_n(z)| ≤ ν_n max(1, |z|)^n`.
pub fn hermite_abs_coefficient_sum(n: usize) -> f64 {
    // He_n coefficients from the recurrence, in f64
    let mut prev = vec![1.0];
    let mut cur = vec![0.0, 1.0];
    if n == 0 {
        return 1.0;
    }
    for k in 1..n {
        let mut next = vec![0.0; k + 2];
        for (i, c) in cur.iter().enumerate() {
            next[i + 1] += c;
        }
        for (i, c) in prev.iter().enumerate() {
            next[i] -= k as f64 * c;
        }
        prev = cur;
        cur = next;
    }
    let fact: f64 = (1..=n).map(|i| i as f64).product();
    cur.iter().map(|c| c.abs()).sum::<f64>() / fact.sqrt()
}

/// Base constant `(d + 1) · max|c_i| · max_{n≤d} ν_n`.
pub fn lemma1_base_constant(coeffs: &[f64]) -> f64 {
    let d = coeffs.len() - 1;
    let cmax = coeffs.iter().fold(0.0f64, |m, c| m.max(c.abs()));
    let nu = (0..=d).map(hermite_abs_coefficient_sum).fold(0.0, f64::max);
    (d + 1) as f64 * cmax * nu
}

/// Output-gap bound `C·d·α·β` with `C = multiplier · base constant`, and the
/// exact `max_{l,k} |f_l(x) − f_k(x)|`.
pub fn lemma1_bound(inputs: &BoundInputs, x: &[f64], multiplier: f64) -> Result<Lemma1> {
    let (a, w) = (&inputs.a, &inputs.w);
    if a.shape().len() != 2 || w.shape().len() != 2 {
        return Err(Error::structural("A and W must be matrices"));
    }
    let (k, j) = (a.shape()[0], a.shape()[1]);
    if w.shape()[0] != j || w.shape()[1] != x.len() {
        return Err(Error::structural(format!(
            "A is {:?}, W is {:?}, x has {} entries",
            a.shape(),
            w.shape(),
            x.len()
        )));
    }
    if inputs.coeffs.len() < 2 {
        return Err(Error::Domain("the bound needs degree at least 1".into()));
    }
    let conj = 1.0 / inputs.p + 1.0 / inputs.q;
    if inputs.p < 1.0 || inputs.q < 1.0 || (conj - 1.0).abs() > 1e-12 {
        return Err(Error::Domain(format!(
            "p = {} and q = {} are not Hölder conjugates",
            inputs.p, inputs.q
        )));
    }
    let d = inputs.coeffs.len() - 1;
    let basis = HermiteBasis::new(d)?;
    let hidden: Vec<f64> = (0..j)
        .map(|u| {
            let z: f64 = w.row(u).iter().zip(x).map(|(a, b)| a * b).sum();
            basis.series(&inputs.coeffs, z)
        })
        .collect();
    let out: Vec<f64> = (0..k)
        .map(|l| a.row(l).iter().zip(&hidden).map(|(a, h)| a * h).sum())
        .collect();
    let mut lhs_max: f64 = 0.0;
    let mut alpha: f64 = 0.0;
    for l in 0..k {
        for m in 0..k {
            lhs_max = lhs_max.max((out[l] - out[m]).abs());
            let s: f64 = a
                .row(l)
                .iter()
                .zip(a.row(m))
                .map(|(u, v)| (u - v).abs())
                .sum();
            alpha = alpha.max(s);
        }
    }
    // the row achieving the largest ℓ_p norm stands in for ‖w‖_p
    let wn = (0..j)
        .map(|u| lp_norm(w.row(u), inputs.p))
        .fold(0.0, f64::max);
    let xn = lp_norm(x, inputs.q);
    let beta = (wn.powi(d as i32) * xn.powi(d as i32)).max(wn * xn);
    let constant = multiplier * lemma1_base_constant(&inputs.coeffs);
    Ok(Lemma1 {
        bound: constant * d as f64 * alpha * beta,
        lhs_max,
        alpha,
        beta,
        constant,
    })
}

/// A random instance: standard normal `A`, `W`, `x` and coefficients.
pub fn random_bound_instance(
    rng: &mut SeededRng,
    k: usize,
    j: usize,
    dim: usize,
    degree: usize,
    p: f64,
) -> (BoundInputs, Vec<f64>) {
    let mut draw = |n: usize| (0..n).map(|_| rng.normal()).collect::<Vec<f64>>();
    let a = Tensor::matrix(k, j, draw(k * j)).unwrap();
    let w = Tensor::matrix(j, dim, draw(j * dim)).unwrap();
    let coeffs = draw(degree + 1);
    let x = draw(dim);
    let q = conjugate_exponent(p);
    (BoundInputs { a, w, coeffs, p, q }, x)
}

pub fn conjugate_exponent(p: f64) -> f64 {
    if p == 1.0 {
        f64::INFINITY
    } else if p.is_infinite() {
        1.0
    } else {
        p / (p - 1.0)
    }
}

/// Smallest power of two `m ≥ 1` for which `lemma1_bound` with multiplier
/// `m` holds on every instance of the corpus.
pub fn calibrate_lemma1_multiplier(corpus: &[(BoundInputs, Vec<f64>)]) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for (inputs, x) in corpus {
        let r = lemma1_bound(inputs, x, 1.0)?;
        if r.lhs_max > 0.0 {
            worst = worst.max(r.lhs_max / r.bound);
        }
    }
    let mut m = 1.0;
    while m < worst {
        m *= 2.0;
    }
    Ok(m)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RequiredNorm {
    pub value: f64,
    /// True when `α ≤ ln(1 + Kε)`, in which case the value is 0.
    pub vacuous: bool,
}

/// `(1/‖w_J‖) · ln(α / ln(1 + Kε))`, or 0 when the bound is vacuous.
pub fn theorem1_required_norm(
    w_j_norm: f64,
    alpha: f64,
    k: usize,
    eps: f64,
) -> Result<RequiredNorm> {
    if !(w_j_norm > 0.0 && alpha > 0.0 && eps > 0.0) || k == 0 {
        return Err(Error::Domain(
            "required norm needs positive ‖w_J‖, α, K and ε".into(),
        ));
    }
    let denom = (k as f64 * eps).ln_1p();
    if alpha <= denom {
        return Ok(RequiredNorm {
            value: 0.0,
            vacuous: true,
        });
    }
    Ok(RequiredNorm {
        value: (alpha / denom).ln() / w_j_norm,
        vacuous: false,
    })
}

/// Largest softmax probability of the model at `r · direction` for each
/// radius.
pub fn confidence_profile(model: &Model, direction: &[f64], radii: &[f64]) -> Result<Vec<f64>> {
    if direction.len() != model.input_dim() {
        return Err(Error::structural(
            "direction width does not match the model",
        ));
    }
    if radii.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::structural("radii must be ascending"));
    }
    let rows: Vec<f64> = radii
        .iter()
        .flat_map(|r| direction.iter().map(move |d| r * d))
        .collect();
    let x = Tensor::matrix(radii.len(), direction.len(), rows)?;
    let logits = model.predict(&x)?;
    Ok((0..logits.rows())
        .map(|i| {
            let z = logits.row(i);
            let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let s: f64 = z.iter().map(|v| (v - m).exp()).sum();
            1.0 / s
        })
        .collect())
}

/// A unit vector drawn uniformly from the sphere.
pub fn random_direction(rng: &mut SeededRng, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.normal()).collect();
        let n = lp_norm(&v, 2.0);
        if n > 1e-12 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

/// One CSV block: a schema line naming the probe and its parameters, a
/// header, then the rows.
pub fn csv_block(probe: &str, params: &str, header: &str, rows: &[Vec<f64>]) -> String {
    let mut s = format!("# hermite-csv v1 probe={probe} {params}\n{header}\n");
    for r in rows {
        let line: Vec<String> = r.iter().map(|v| v.to_string()).collect();
        let _ = writeln!(s, "{}", line.join(","));
    }
    s
}

/// Explicit `He_n(z)` via its coefficients; used to cross-check `ν_n`.
pub fn hermite_bound_holds(n: usize, z: f64) -> Result<bool> {
    let fact: f64 = (1..=n).map(|i| i as f64).product();
    let h = eval_unnormalized(n, z)? / fact.sqrt();
    Ok(h.abs() <= hermite_abs_coefficient_sum(n) * z.abs().max(1.0).powi(n as i32) * (1.0 + 1e-12))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::activations::Activation;
    use crate::data::synth_blobs;
    use crate::models::MlpSpec;

    #[test]
    fn eta_zero_reproduces_the_loss() {
        let data = synth_blobs(3, 20, 2, 0.4, 1).unwrap();
        let spec =
            MlpSpec::new(vec![2, 8, 8, 3], Activation::Hermite { degree: 4 }).normalized(true);
        let m = Model::mlp(&spec, 2).unwrap();
        let before = m.clone();
        let t = data.one_hot();
        let probe = loss_along_gradient(
            &m,
            &data.features,
            &t,
            Loss::CrossEntropy,
            &[0.0, 0.05, 0.1],
        )
        .unwrap();
        let direct = batch_loss(&m, &data.features, &t, Loss::CrossEntropy).unwrap();
        assert_eq!(probe.losses[0].to_bits(), direct.to_bits());
        assert!(probe.losses.iter().all(|l| l.is_finite()));
        assert_eq!(m, before);
    }

    #[test]
    fn quadratic_toy_landscape() {
        // one linear unit, x = 1, target 0: L = (w + b)², both gradients 2(w + b)
        let spec = MlpSpec::new(vec![1, 1], Activation::Identity);
        let mut m = Model::mlp(&spec, 0).unwrap();
        m.param_mut("layer0.w").fill(1.0);
        m.param_mut("layer0.b").fill(0.0);
        let x = Tensor::matrix(1, 1, vec![1.0]).unwrap();
        let t = Tensor::matrix(1, 1, vec![0.0]).unwrap();
        let probe =
            loss_along_gradient(&m, &x, &t, Loss::SquaredErrorSum, &[0.0, 0.125, 0.25]).unwrap();
        for (eta, l) in probe.etas.iter().zip(&probe.losses) {
            let s = 1.0 - 4.0 * eta;
            assert!((l - s * s).abs() < 1e-15);
        }
        assert_eq!(probe.losses[2], 0.0);
    }

    #[test]
    fn blowup_is_recorded_as_infinity() {
        let spec = MlpSpec::new(vec![1, 2, 2], Activation::Hermite { degree: 8 });
        let m = Model::mlp(&spec, 0).unwrap();
        let x = Tensor::matrix(1, 1, vec![1e40]).unwrap();
        let t = Tensor::matrix(1, 2, vec![1.0, 0.0]).unwrap();
        match loss_along_gradient(&m, &x, &t, Loss::CrossEntropy, &[0.1]) {
            Ok(p) => assert!(p.losses[0].is_infinite()),
            Err(e) => assert!(matches!(e, Error::Numeric { .. })),
        }
    }

    #[test]
    fn beta_smoothness_examples() {
        let w = vec![vec![1.0], vec![0.7], vec![0.2]];
        // quadratic: g = w
        assert!((max_beta_smoothness(&w, &w).unwrap() - 1.0).abs() < 1e-15);
        let r = max_beta_smoothness(&[vec![0.0], vec![0.5]], &[vec![0.0], vec![2.0]]).unwrap();
        assert_eq!(r, 4.0);
        let still = vec![vec![1.0], vec![1.0]];
        assert!(matches!(
            max_beta_smoothness(&still, &still),
            Err(Error::Undefined(_))
        ));
    }

    #[test]
    fn deviation_examples() {
        let d = weight_deviation(&[vec![0.0, 0.0], vec![3.0, 4.0]]).unwrap();
        assert_eq!(d, vec![0.0, 5.0]);
    }

    #[test]
    fn trajectory_has_one_snapshot_per_step() {
        let data = synth_blobs(3, 30, 2, 0.4, 1).unwrap();
        let spec = MlpSpec::new(vec![2, 8, 3], Activation::Relu);
        let mut m = Model::mlp(&spec, 2).unwrap();
        let mut opt = OptimizerState::sgd(0.1).unwrap();
        let t = record_trajectory(&mut m, &data, &mut opt, 12, 16, 3).unwrap();
        assert_eq!(t.weights.len(), 12);
        assert_eq!(t.weights[0].len(), m.parameter_count());
        assert!(max_beta_smoothness(&t.weights, &t.grads).unwrap() > 0.0);
        assert!(weight_deviation(&t.weights)
            .unwrap()
            .iter()
            .all(|d| *d >= 0.0));
    }

    #[test]
    fn census_examples() {
        let data = synth_blobs(3, 100, 4, 1.0, 2).unwrap();
        let spec =
            MlpSpec::new(vec![4, 16, 16, 3], Activation::Hermite { degree: 4 }).normalized(true);
        let m = Model::mlp(&spec, 1).unwrap();
        for f in active_unit_census(&m, &data.features, 0.0).unwrap() {
            assert!(f >= 0.999);
        }
        let id = Model::mlp(&MlpSpec::new(vec![4, 5, 3], Activation::Identity), 1).unwrap();
        assert_eq!(
            active_unit_census(&id, &data.features, 0.0).unwrap(),
            vec![1.0]
        );
        let mut relu = Model::mlp(&MlpSpec::new(vec![4, 5, 3], Activation::Relu), 1).unwrap();
        let w = relu.param_mut("layer0.w");
        for r in 0..4 {
            w.row_mut(r)[2] = 1e-6;
        }
        relu.param_mut("layer0.b").data_mut()[2] = -1e3;
        let units = active_units(&relu, &data.features, 0.0).unwrap();
        assert!(!units[0][2]);
        assert!(active_unit_census(&relu, &data.features, 0.0).unwrap()[0] <= 0.8);
    }

    #[test]
    fn abs_coefficient_sums() {
        assert_eq!(hermite_abs_coefficient_sum(0), 1.0);
        assert_eq!(hermite_abs_coefficient_sum(1), 1.0);
        // He_2 = x² − 1, He_4 = x⁴ − 6x² + 3
        assert!((hermite_abs_coefficient_sum(2) - 2.0 / 2f64.sqrt()).abs() < 1e-15);
        assert!((hermite_abs_coefficient_sum(4) - 10.0 / 24f64.sqrt()).abs() < 1e-15);
        for n in 0..10 {
            for z in [-7.0, -1.3, -0.2, 0.0, 0.9, 2.5] {
                assert!(hermite_bound_holds(n, z).unwrap());
            }
        }
    }

    #[test]
    fn identical_rows_give_zero_bound() {
        let a = Tensor::from_rows(&[vec![0.3, -1.0], vec![0.3, -1.0]]).unwrap();
        let w = Tensor::from_rows(&[vec![1.0, 2.0], vec![-0.5, 0.1]]).unwrap();
        let inputs = BoundInputs {
            a,
            w,
            coeffs: vec![0.1, 0.5, 0.2],
            p: 2.0,
            q: 2.0,
        };
        let r = lemma1_bound(&inputs, &[0.4, -0.3], 1.0).unwrap();
        assert_eq!((r.alpha, r.bound, r.lhs_max), (0.0, 0.0, 0.0));
    }

    #[test]
    fn linear_network_bound_holds() {
        let mut rng = SeededRng::new(12);
        for _ in 0..1000 {
            let (mut inputs, x) = random_bound_instance(&mut rng, 3, 4, 2, 1, 2.0);
            inputs.coeffs = vec![0.0, 1.0];
            let r = lemma1_bound(&inputs, &x, 1.0).unwrap();
            assert!(r.bound >= r.lhs_max, "{r:?}");
        }
    }

    #[test]
    fn bound_rejects_bad_inputs() {
        let mut rng = SeededRng::new(1);
        let (mut inputs, x) = random_bound_instance(&mut rng, 3, 4, 2, 2, 2.0);
        assert!(matches!(
            lemma1_bound(&inputs, &x[..1], 1.0),
            Err(Error::Structural(_))
        ));
        inputs.q = 3.0;
        assert!(matches!(
            lemma1_bound(&inputs, &x, 1.0),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn required_norm_examples() {
        let r = theorem1_required_norm(1.0, 4.0, 10, 0.05).unwrap();
        let hand = (4.0 / 1.5f64.ln()).ln();
        assert!((r.value - hand).abs() < 1e-12);
        assert!((r.value - 2.289).abs() < 1e-3);
        assert!(!r.vacuous);
        let half = theorem1_required_norm(2.0, 4.0, 10, 0.05).unwrap();
        assert!((half.value - r.value / 2.0).abs() < 1e-15);
        let big = theorem1_required_norm(1.0, 4.0, 10, 1e6).unwrap();
        assert_eq!(
            big,
            RequiredNorm {
                value: 0.0,
                vacuous: true
            }
        );
    }

    proptest::proptest! {
        #[test]
        fn required_norm_monotonicity(
            w in 0.1f64..5.0,
            a in 1.0f64..20.0,
            e in 0.001f64..0.05,
            k in 1usize..50,
        ) {
            let base = theorem1_required_norm(w, a, k, e).unwrap().value;
            proptest::prop_assert!(theorem1_required_norm(w, a, k, e * 1.1).unwrap().value <= base);
            proptest::prop_assert!(theorem1_required_norm(w * 1.1, a, k, e).unwrap().value <= base);
            proptest::prop_assert!(theorem1_required_norm(w, a * 1.1, k, e).unwrap().value >= base);
        }

        #[test]
        fn probes_leave_the_model_untouched(seed in 0u64..1000, eta in 0.0f64..2.0) {
            let data = synth_blobs(3, 10, 2, 0.5, seed).unwrap();
            let spec = MlpSpec::new(vec![2, 6, 3], Activation::Hermite { degree: 4 }).normalized(true);
            let m = Model::mlp(&spec, seed).unwrap();
            let before = m.clone();
            loss_along_gradient(&m, &data.features, &data.one_hot(), Loss::CrossEntropy, &[0.0, eta]).unwrap();
            active_unit_census(&m, &data.features, 0.0).unwrap();
            confidence_profile(&m, &[0.6, 0.8], &[1.0, 10.0]).unwrap();
            proptest::prop_assert_eq!(m, before);
        }
    }

    #[test]
    fn zero_output_layer_gives_uniform_confidence() {
        let spec = MlpSpec::new(vec![3, 6, 4], Activation::Relu);
        let mut m = Model::mlp(&spec, 0).unwrap();
        m.param_mut("layer1.w").fill(0.0);
        let mut rng = SeededRng::new(1);
        let dir = random_direction(&mut rng, 3);
        let radii: Vec<f64> = (1..=50).map(f64::from).collect();
        for c in confidence_profile(&m, &dir, &radii).unwrap() {
            assert_eq!(c, 0.25);
        }
    }
}
