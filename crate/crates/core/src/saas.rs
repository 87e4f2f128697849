//! Speed-as-a-supervisor pseudo-labelling: an inner primal loop over the
//! weights that accumulates loss gradients with respect to the pseudo-label
//! posterior, and an outer dual loop that moves the posterior and restarts
//! the weights.

use std::fmt::Write as _;
use std::time::Instant;

use crate::autodiff::{Graph, OptimizerState, Tensor};
use crate::data::{one_hot, Dataset};
use crate::error::{Error, Result};
use crate::models::{MlpSpec, Mode, Model};
use crate::rng::{derive, SeededRng};

/// Rows of a pseudo-label posterior must sum to one within this tolerance.
pub const SIMPLEX_TOL: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq)]
pub struct SaasConfig {
    pub inner_epochs: usize,
    pub outer_epochs: usize,
    /// Weight step size.
    pub lr_w: f64,
    /// Scale applied to `∂L/∂P_u` when it is accumulated into `ΔP_u`.
    pub lr_p_primal: f64,
    /// Step size of the update `P_u ← P_u − η ΔP_u`.
    pub lr_p_dual: f64,
    pub entropy_weight: f64,
    /// Lower clamp on `p` inside the entropy gradient `−ln p − 1`.
    pub entropy_floor: f64,
    pub batch_size: usize,
    pub seed: u64,
    /// Train on argmax-hardened posterior rows instead of the soft rows.
    pub hard_targets: bool,
    pub record_timing: bool,
}

impl Default for SaasConfig {
    fn default() -> Self {
        Self {
            inner_epochs: 5,
            outer_epochs: 30,
            lr_w: 0.1,
            lr_p_primal: 1.0,
            lr_p_dual: 1.0,
            entropy_weight: 0.1,
            entropy_floor: 1e-2,
            batch_size: 64,
            seed: 0,
            hard_targets: false,
            record_timing: false,
        }
    }
}

impl SaasConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("lr_w", self.lr_w),
            ("lr_p_primal", self.lr_p_primal),
            ("lr_p_dual", self.lr_p_dual),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if self.inner_epochs == 0 {
            return Err(Error::Config("inner_epochs must be positive".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        if !(self.entropy_weight >= 0.0) {
            return Err(Error::Config("entropy_weight must be non-negative".into()));
        }
        if !(self.entropy_floor > 0.0 && self.entropy_floor <= 1.0) {
            return Err(Error::Config("entropy_floor must lie in (0, 1]".into()));
        }
        Ok(())
    }
}

/// Euclidean projection of `v` onto the probability simplex, in place.
pub fn project_simplex(v: &mut [f64]) {
    let mut sorted = v.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut theta = 0.0;
    for (i, u) in sorted.iter().enumerate() {
        cumsum += u;
        let t = (cumsum - 1.0) / (i + 1) as f64;
        if u - t > 0.0 {
            theta = t;
        }
    }
    for x in v.iter_mut() {
        *x = (*x - theta).max(0.0);
    }
    // one renormalisation pass removes rounding drift in the sum
    let s: f64 = v.iter().sum();
    v.iter_mut().for_each(|x| *x /= s);
}

/// True when every row is non-negative and sums to one within `tol`.
pub fn rows_on_simplex(p: &Tensor, tol: f64) -> bool {
    (0..p.rows()).all(|i| {
        let row = p.row(i);
        row.iter().all(|v| *v >= 0.0) && (row.iter().sum::<f64>() - 1.0).abs() <= tol
    })
}

/// Each row a one-hot vector at a uniformly random class.
pub fn initialize_pseudo_labels(n: usize, classes: usize, seed: u64) -> Result<Tensor> {
    if n == 0 || classes == 0 {
        return Err(Error::structural("pseudo-labels need positive N and K"));
    }
    let mut rng = SeededRng::new(seed);
    let labels: Vec<usize> = (0..n).map(|_| rng.below(classes)).collect();
    Ok(one_hot(&labels, classes))
}

/// Fraction of rows whose argmax (lowest index on ties) equals the truth.
pub fn pseudo_label_accuracy(p: &Tensor, truth: &[usize]) -> Result<f64> {
    if p.rows() != truth.len() {
        return Err(Error::structural(format!(
            "{} posterior rows vs {} labels",
            p.rows(),
            truth.len()
        )));
    }
    let hits = p
        .argmax_rows()
        .iter()
        .zip(truth)
        .filter(|(a, b)| a == b)
        .count();
    Ok(hits as f64 / truth.len() as f64)
}

/// First (0-based) index whose accuracy reaches `threshold`.
pub fn epochs_to_accuracy(log: &[f64], threshold: f64) -> Option<usize> {
    log.iter().position(|a| *a >= threshold)
}

/// `(hours, dollars)` for `epochs` epochs of `seconds_per_epoch` each at
/// `dollars_per_hour`.
pub fn cost_model(
    epochs: f64,
    seconds_per_epoch: f64,
    dollars_per_hour: f64,
) -> Result<(f64, f64)> {
    if !(epochs > 0.0 && seconds_per_epoch > 0.0 && dollars_per_hour > 0.0) {
        return Err(Error::Domain("cost model inputs must be positive".into()));
    }
    let hours = epochs * seconds_per_epoch / 3600.0;
    Ok((hours, hours * dollars_per_hour))
}

/// Dollar cost of a run measured in hours.
pub fn cost_from_hours(hours: f64, dollars_per_hour: f64) -> Result<f64> {
    cost_model(hours, 3600.0, dollars_per_hour).map(|(_, d)| d)
}

/// Value of the combined loss and its gradient with respect to the
/// posterior rows used.
#[derive(Clone, Debug)]
pub struct SaasLoss {
    pub value: f64,
    pub grad_p: Option<Tensor>,
}

/// `L = CE(model(x), y) + CE(model(z), P) + λ_E·H(P)` on one batch, with the
/// gradients of the weights accumulated into `model`'s parameter set. Either
/// part may be absent. With `hard_targets` the unlabeled cross-entropy uses
/// the argmax rows of `P`, and its target gradient is passed to `P` unchanged.
#[allow(clippy::too_many_arguments)]
pub fn saas_loss(
    model: &mut Model,
    labeled: Option<(&Tensor, &Tensor)>,
    unlabeled: Option<(&Tensor, &Tensor)>,
    entropy_weight: f64,
    entropy_floor: f64,
    hard_targets: bool,
) -> Result<SaasLoss> {
    if let Some((_, p)) = unlabeled {
        if !rows_on_simplex(p, 1e-6) {
            return Err(Error::Invariant(
                "pseudo-label rows are off the simplex".into(),
            ));
        }
    }
    let mut g = Graph::new();
    let bound = model.params().bind(&mut g);
    let mut terms = Vec::new();
    let mut norms = Vec::new();
    if let Some((x, y)) = labeled {
        let xv = g.constant(x.clone());
        let f = model.forward(&mut g, &bound, xv, Mode::Train)?;
        let t = g.constant(y.clone());
        terms.push(g.softmax_cross_entropy(f.output, t)?);
        norms.push(f);
    }
    let mut p_var = None;
    if let Some((z, p)) = unlabeled {
        let zv = g.constant(z.clone());
        let f = model.forward(&mut g, &bound, zv, Mode::Train)?;
        let pv = g.param(p.clone());
        let target = if hard_targets {
            let hard = one_hot(&p.argmax_rows(), p.row_len());
            g.param(hard)
        } else {
            pv
        };
        terms.push(g.softmax_cross_entropy_unchecked(f.output, target)?);
        if entropy_weight > 0.0 {
            let h = g.entropy(pv, entropy_floor)?;
            terms.push(g.scale(h, entropy_weight)?);
        }
        p_var = Some((pv, target));
        norms.push(f);
    }
    let Some(&first) = terms.first() else {
        return Err(Error::structural(
            "saas_loss needs a labeled or unlabeled batch",
        ));
    };
    let mut loss = first;
    for &t in &terms[1..] {
        loss = g.add(loss, t)?;
    }
    g.backward(loss)?;
    model.params_mut().accumulate_grads(&g, &bound);
    for f in &norms {
        model.commit_running_stats(&g, f);
    }
    let grad_p = p_var.map(|(pv, target)| {
        let mut grad = g
            .grad(pv)
            .cloned()
            .unwrap_or_else(|| Tensor::zeros(g.value(pv).shape()));
        if target != pv {
            if let Some(t) = g.grad(target) {
                grad.add_assign(t);
            }
        }
        grad
    });
    Ok(SaasLoss {
        value: g.value(loss).item(),
        grad_p,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct OuterEpoch {
    pub outer_epoch: usize,
    pub pl_accuracy: f64,
    pub mean_inner_loss_first: f64,
    pub mean_inner_loss_last: f64,
    pub seconds: f64,
    /// Mean loss of every inner epoch, in order.
    pub inner_losses: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct SaasResult {
    pub model: Model,
    pub posterior: Tensor,
    pub initial_accuracy: Option<f64>,
    pub log: Vec<OuterEpoch>,
    /// Outer epoch at which a numeric failure stopped the run.
    pub aborted_at: Option<(usize, String)>,
}

pub const SAAS_HEADER: &str =
    "outer_epoch,pl_accuracy,mean_inner_loss_first,mean_inner_loss_last,seconds";

impl SaasResult {
    pub fn accuracies(&self) -> Vec<f64> {
        self.log.iter().map(|e| e.pl_accuracy).collect()
    }

    pub fn max_accuracy(&self) -> Option<f64> {
        self.log.iter().map(|e| e.pl_accuracy).reduce(f64::max)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("# hermite-csv v1 saas\n");
        s.push_str(SAAS_HEADER);
        s.push('\n');
        for e in &self.log {
            let _ = writeln!(
                s,
                "{},{},{},{},{}",
                e.outer_epoch,
                e.pl_accuracy,
                e.mean_inner_loss_first,
                e.mean_inner_loss_last,
                e.seconds
            );
        }
        s
    }
}

/// Runs the two-loop algorithm. `unlabeled_truth`, when given, is used only
/// to score the posterior after each dual step. `observer` sees the posterior
/// after every dual step.
pub fn saas_train(
    spec: &MlpSpec,
    labeled: &Dataset,
    unlabeled: &Tensor,
    unlabeled_truth: Option<&[usize]>,
    cfg: &SaasConfig,
    mut observer: impl FnMut(usize, &Tensor),
) -> Result<SaasResult> {
    cfg.validate()?;
    let k = labeled.classes;
    if unlabeled.shape().len() != 2 || unlabeled.row_len() != labeled.dim() {
        return Err(Error::structural(
            "unlabeled features do not match labeled width",
        ));
    }
    let n_u = unlabeled.rows();
    let mut posterior = initialize_pseudo_labels(n_u, k, derive(cfg.seed, u64::MAX))?;
    let initial_accuracy = unlabeled_truth
        .map(|t| pseudo_label_accuracy(&posterior, t))
        .transpose()?;
    let mut model = Model::mlp(spec, derive(cfg.seed, 0))?;
    let targets = labeled.one_hot();
    let mut order_rng = SeededRng::new(derive(cfg.seed, 0x0bde));
    let mut log = Vec::new();
    let mut aborted_at = None;

    for outer in 0..cfg.outer_epochs {
        let start = Instant::now();
        model.reinitialize(derive(cfg.seed, outer as u64))?;
        let mut opt = OptimizerState::sgd(cfg.lr_w)?;
        let mut delta = Tensor::zeros(&[n_u, k]);
        let mut inner_losses = Vec::with_capacity(cfg.inner_epochs);
        let result = (|| -> Result<()> {
            for _ in 0..cfg.inner_epochs {
                let u_order = order_rng.permutation(n_u);
                let mut l_order = order_rng.permutation(labeled.len());
                let mut l_pos = 0;
                let (mut sum, mut steps) = (0.0, 0usize);
                for chunk in u_order.chunks(cfg.batch_size) {
                    let lb = cfg.batch_size.min(labeled.len());
                    if l_pos + lb > l_order.len() {
                        order_rng.shuffle(&mut l_order);
                        l_pos = 0;
                    }
                    let l_idx = &l_order[l_pos..l_pos + lb];
                    l_pos += lb;
                    let x = labeled.features.select_rows(l_idx);
                    let y = targets.select_rows(l_idx);
                    let z = unlabeled.select_rows(chunk);
                    let p = posterior.select_rows(chunk);
                    model.params_mut().zero_grads();
                    let out = saas_loss(
                        &mut model,
                        Some((&x, &y)),
                        Some((&z, &p)),
                        cfg.entropy_weight,
                        cfg.entropy_floor,
                        cfg.hard_targets,
                    )?;
                    opt.step(model.params_mut())?;
                    let gp = out.grad_p.expect("unlabeled batch present");
                    for (r, &i) in chunk.iter().enumerate() {
                        for (d, g) in delta.row_mut(i).iter_mut().zip(gp.row(r)) {
                            *d += cfg.lr_p_primal * g;
                        }
                    }
                    sum += out.value;
                    steps += 1;
                }
                inner_losses.push(sum / steps as f64);
            }
            Ok(())
        })();
        if let Err(e) = result {
            match e {
                Error::Numeric { .. } => {
                    aborted_at = Some((outer, e.to_string()));
                    break;
                }
                other => return Err(other),
            }
        }
        for i in 0..n_u {
            let row = posterior.row_mut(i);
            for (p, d) in row.iter_mut().zip(delta.row(i)) {
                *p -= cfg.lr_p_dual * d;
            }
            project_simplex(row);
        }
        debug_assert!(rows_on_simplex(&posterior, SIMPLEX_TOL));
        observer(outer, &posterior);
        let pl_accuracy = match unlabeled_truth {
            Some(t) => pseudo_label_accuracy(&posterior, t)?,
            None => f64::NAN,
        };
        log.push(OuterEpoch {
            outer_epoch: outer,
            pl_accuracy,
            mean_inner_loss_first: inner_losses[0],
            mean_inner_loss_last: *inner_losses.last().unwrap(),
            seconds: if cfg.record_timing {
                start.elapsed().as_secs_f64()
            } else {
                0.0
            },
            inner_losses,
        });
    }
    Ok(SaasResult {
        model,
        posterior,
        initial_accuracy,
        log,
        aborted_at,
    })
}

/// Accuracy of 1-nearest-neighbour (Euclidean) classification of `queries`
/// against the labeled set.
pub fn nearest_neighbour_accuracy(labeled: &Dataset, queries: &Tensor, truth: &[usize]) -> f64 {
    let mut hits = 0;
    for q in 0..queries.rows() {
        let row = queries.row(q);
        let mut best = (f64::INFINITY, 0);
        for i in 0..labeled.len() {
            let d: f64 = labeled
                .features
                .row(i)
                .iter()
                .zip(row)
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            if d < best.0 {
                best = (d, labeled.labels[i]);
            }
        }
        if best.1 == truth[q] {
            hits += 1;
        }
    }
    hits as f64 / truth.len() as f64
}
