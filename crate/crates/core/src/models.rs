//! MLP classifiers, the pre-activation residual MLP, the deep autoencoder
//! and the supervised training loop.

use std::fmt::Write as _;
use std::time::Instant;

use crate::activations::{initial_coefficients, Activation, CoeffInit, Pointwise};
use crate::autodiff::{Bound, Graph, OptimizerState, ParamSet, Tensor, Var};
use crate::data::{one_hot, Dataset};
use crate::error::{Error, Result};
use crate::rng::{derive, SeededRng};

/// Momentum of the running averages kept by feature normalization.
pub const NORM_MOMENTUM: f64 = 0.9;

#[derive(Clone, Debug, PartialEq)]
pub struct MlpSpec {
    pub widths: Vec<usize>,
    pub activation: Activation,
    pub normalize: bool,
    pub residual: bool,
    /// Adds a softsign after the dense layer of each residual block.
    pub second_softsign: bool,
    pub coeff_init: CoeffInit,
    pub train_coeffs: bool,
}

impl MlpSpec {
    pub fn new(widths: Vec<usize>, activation: Activation) -> Self {
        Self {
            widths,
            activation,
            normalize: false,
            residual: false,
            second_softsign: false,
            coeff_init: CoeffInit::Relu,
            train_coeffs: true,
        }
    }

    pub fn normalized(mut self, on: bool) -> Self {
        self.normalize = on;
        self
    }

    pub fn residual(mut self, on: bool) -> Self {
        self.residual = on;
        self
    }

    fn validate(&self) -> Result<()> {
        if self.widths.len() < 2 || self.widths.contains(&0) {
            return Err(Error::structural(format!(
                "need at least two positive widths, got {:?}",
                self.widths
            )));
        }
        if self.residual {
            if self.widths.len() < 3 {
                return Err(Error::structural("residual MLP needs a hidden layer"));
            }
            let hidden = &self.widths[1..self.widths.len() - 1];
            if hidden.iter().any(|w| *w != hidden[0]) {
                return Err(Error::structural(format!(
                    "residual MLP needs equal hidden widths, got {hidden:?}"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AutoencoderSpec {
    /// Encoder widths from the input down to the code; the decoder mirrors them.
    pub encoder: Vec<usize>,
    pub activation: Activation,
    pub normalize: bool,
}

impl AutoencoderSpec {
    pub fn standard(activation: Activation) -> Self {
        Self {
            encoder: vec![784, 1000, 500, 250, 30],
            activation,
            normalize: false,
        }
    }

    /// Full width list, encoder followed by the mirrored decoder.
    pub fn widths(&self) -> Vec<usize> {
        let mut w = self.encoder.clone();
        w.extend(self.encoder.iter().rev().skip(1));
        w
    }
}

/// What follows a dense layer.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Stage {
    Hidden,
    Linear,
    Sigmoid,
}

#[derive(Clone, Debug, PartialEq)]
struct Norm {
    gamma: usize,
    beta: usize,
    mean: usize,
    var: usize,
}

/// Normalization plus activation, as applied to hidden features.
#[derive(Clone, Debug, PartialEq)]
struct ActStage {
    norm: Option<Norm>,
    coeffs: Option<usize>,
}

#[derive(Clone, Debug, PartialEq)]
struct Dense {
    w: usize,
    b: usize,
}

#[derive(Clone, Debug, PartialEq)]
struct PlainLayer {
    dense: Dense,
    stage: Stage,
    act: Option<ActStage>,
}

/// Pre-activation block: normalize → activation → softsign → dense →
/// optional second softsign, with an optional residual add.
#[derive(Clone, Debug, PartialEq)]
pub struct PreactBlock {
    act: ActStage,
    dense: Dense,
    pub second_softsign: bool,
    pub residual: bool,
}

#[derive(Clone, Debug, PartialEq)]
enum Layout {
    Plain(Vec<PlainLayer>),
    Residual {
        stem: Dense,
        blocks: Vec<PreactBlock>,
        head_act: ActStage,
        head: Dense,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Graph handles produced by one forward pass.
#[derive(Clone, Debug)]
pub struct Forward {
    pub output: Var,
    /// Post-activation output of every hidden activation layer.
    pub hidden: Vec<Var>,
    norms: Vec<(Var, usize, usize)>,
}

/// A network with its parameters. Cloning gives an independent snapshot.
#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    activation: Activation,
    coeff_init: CoeffInit,
    widths: Vec<usize>,
    layout: Layout,
    params: ParamSet,
}

struct Builder<'a> {
    params: &'a mut ParamSet,
    activation: Activation,
    normalize: bool,
    coeff_init: CoeffInit,
    train_coeffs: bool,
}

impl Builder<'_> {
    fn dense(&mut self, name: &str, fan_in: usize, fan_out: usize) -> Result<Dense> {
        Ok(Dense {
            w: self
                .params
                .push(format!("{name}.w"), Tensor::zeros(&[fan_in, fan_out]), true)?,
            b: self
                .params
                .push(format!("{name}.b"), Tensor::zeros(&[fan_out]), true)?,
        })
    }

    fn act_stage(&mut self, name: &str, width: usize) -> Result<ActStage> {
        let norm = if self.normalize {
            Some(Norm {
                gamma: self.params.push(
                    format!("{name}.norm.gamma"),
                    Tensor::full(&[width], 1.0),
                    true,
                )?,
                beta: self.params.push(
                    format!("{name}.norm.beta"),
                    Tensor::zeros(&[width]),
                    true,
                )?,
                mean: self.params.push(
                    format!("{name}.norm.running_mean"),
                    Tensor::zeros(&[width]),
                    false,
                )?,
                var: self.params.push(
                    format!("{name}.norm.running_var"),
                    Tensor::full(&[width], 1.0),
                    false,
                )?,
            })
        } else {
            None
        };
        let coeffs = match self.activation.degree() {
            Some(d) => Some(self.params.push(
                format!("{name}.act.c"),
                Tensor::vector(initial_coefficients(d, self.coeff_init)?)?,
                self.train_coeffs,
            )?),
            None => None,
        };
        Ok(ActStage { norm, coeffs })
    }
}

impl Model {
    /// Builds an MLP (plain or residual) and draws its weights from `seed`.
    pub fn mlp(spec: &MlpSpec, seed: u64) -> Result<Model> {
        spec.validate()?;
        let mut params = ParamSet::new();
        let mut b = Builder {
            params: &mut params,
            activation: spec.activation,
            normalize: spec.normalize,
            coeff_init: spec.coeff_init,
            train_coeffs: spec.train_coeffs,
        };
        let w = &spec.widths;
        let n = w.len();
        let layout = if spec.residual {
            let stem = b.dense("stem", w[0], w[1])?;
            let mut blocks = Vec::new();
            for i in 1..n - 2 {
                let name = format!("block{i}");
                blocks.push(PreactBlock {
                    act: b.act_stage(&name, w[i])?,
                    dense: b.dense(&name, w[i], w[i + 1])?,
                    second_softsign: spec.second_softsign,
                    residual: true,
                });
            }
            let head_act = b.act_stage("head", w[n - 2])?;
            let head = b.dense("head", w[n - 2], w[n - 1])?;
            Layout::Residual {
                stem,
                blocks,
                head_act,
                head,
            }
        } else {
            let mut layers = Vec::new();
            for i in 0..n - 1 {
                let name = format!("layer{i}");
                let dense = b.dense(&name, w[i], w[i + 1])?;
                let hidden = i + 1 < n - 1;
                let act = if hidden {
                    Some(b.act_stage(&name, w[i + 1])?)
                } else {
                    None
                };
                layers.push(PlainLayer {
                    dense,
                    stage: if hidden { Stage::Hidden } else { Stage::Linear },
                    act,
                });
            }
            Layout::Plain(layers)
        };
        let mut model = Model {
            activation: spec.activation,
            coeff_init: spec.coeff_init,
            widths: w.clone(),
            layout,
            params,
        };
        model.reinitialize(seed)?;
        Ok(model)
    }

    /// Builds the mirrored autoencoder: hidden layers use the configured
    /// activation, the code layer is linear and the output is a sigmoid.
    pub fn autoencoder(spec: &AutoencoderSpec, seed: u64) -> Result<Model> {
        let e = &spec.encoder;
        if e.len() < 2 || e.contains(&0) || e[e.len() - 1] >= e[0] {
            return Err(Error::structural(format!(
                "autoencoder widths {e:?} need a code narrower than the input"
            )));
        }
        let widths = spec.widths();
        let code = e.len() - 2;
        let mut params = ParamSet::new();
        let mut b = Builder {
            params: &mut params,
            activation: spec.activation,
            normalize: spec.normalize,
            coeff_init: CoeffInit::Relu,
            train_coeffs: true,
        };
        let mut layers = Vec::new();
        for i in 0..widths.len() - 1 {
            let name = format!("layer{i}");
            let dense = b.dense(&name, widths[i], widths[i + 1])?;
            let stage = if i == code {
                Stage::Linear
            } else if i == widths.len() - 2 {
                Stage::Sigmoid
            } else {
                Stage::Hidden
            };
            let act = if stage == Stage::Hidden {
                Some(b.act_stage(&name, widths[i + 1])?)
            } else {
                None
            };
            layers.push(PlainLayer { dense, stage, act });
        }
        let mut model = Model {
            activation: spec.activation,
            coeff_init: CoeffInit::Relu,
            widths,
            layout: Layout::Plain(layers),
            params,
        };
        model.reinitialize(seed)?;
        Ok(model)
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    pub fn input_dim(&self) -> usize {
        self.widths[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.widths.last().unwrap()
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    /// Number of trainable scalars.
    pub fn parameter_count(&self) -> usize {
        self.params.trainable_scalar_count()
    }

    /// Parameter by name; panics if absent.
    pub fn param(&self, name: &str) -> &Tensor {
        let i = self
            .params
            .index_of(name)
            .unwrap_or_else(|| panic!("no parameter {name}"));
        &self.params.get(i).value
    }

    pub fn param_mut(&mut self, name: &str) -> &mut Tensor {
        let i = self
            .params
            .index_of(name)
            .unwrap_or_else(|| panic!("no parameter {name}"));
        &mut self.params.get_mut(i).value
    }

    /// Indices of the hidden weight matrices followed by the output layer,
    /// in forward order.
    fn dense_layers(&self) -> Vec<&Dense> {
        match &self.layout {
            Layout::Plain(layers) => layers.iter().map(|l| &l.dense).collect(),
            Layout::Residual {
                stem, blocks, head, ..
            } => std::iter::once(stem)
                .chain(blocks.iter().map(|b| &b.dense))
                .chain(std::iter::once(head))
                .collect(),
        }
    }

    /// Redraws dense weights (normal, sd `√(2/fan_in)`, zero bias), resets
    /// normalization, Hermite coefficients and gradients.
    pub fn reinitialize(&mut self, seed: u64) -> Result<()> {
        let mut rng = SeededRng::new(seed);
        let dense: Vec<(usize, usize)> = self.dense_layers().iter().map(|d| (d.w, d.b)).collect();
        for (w, b) in dense {
            let p = self.params.get_mut(w);
            let std = (2.0 / p.value.shape()[0] as f64).sqrt();
            p.value
                .data_mut()
                .iter_mut()
                .for_each(|v| *v = std * rng.normal());
            self.params.get_mut(b).value.fill(0.0);
        }
        let init = self.coeff_init;
        for p in self.params.iter_mut() {
            let name = p.name.clone();
            if name.ends_with(".norm.gamma") || name.ends_with(".norm.running_var") {
                p.value.fill(1.0);
            } else if name.ends_with(".norm.beta") || name.ends_with(".norm.running_mean") {
                p.value.fill(0.0);
            } else if name.ends_with(".act.c") {
                let c = initial_coefficients(p.value.len() - 1, init)?;
                p.value.data_mut().copy_from_slice(&c);
            }
        }
        self.params.zero_grads();
        Ok(())
    }

    fn dense_fwd(g: &mut Graph, bound: &Bound, d: &Dense, x: Var) -> Result<Var> {
        let h = g.matmul(x, bound.get(d.w))?;
        g.add(h, bound.get(d.b))
    }

    fn act_fwd(
        &self,
        g: &mut Graph,
        bound: &Bound,
        stage: &ActStage,
        mut h: Var,
        mode: Mode,
        norms: &mut Vec<(Var, usize, usize)>,
    ) -> Result<Var> {
        if let Some(n) = &stage.norm {
            let stats = match mode {
                Mode::Train => None,
                Mode::Eval => Some((
                    self.params.get(n.mean).value.data(),
                    self.params.get(n.var).value.data(),
                )),
            };
            h = g.feature_normalize(h, bound.get(n.gamma), bound.get(n.beta), stats)?;
            if mode == Mode::Train {
                norms.push((h, n.mean, n.var));
            }
        }
        match (self.activation, stage.coeffs) {
            (Activation::Hermite { .. }, Some(c)) => {
                let s = g.hermite(h, bound.get(c))?;
                g.pointwise(s, Pointwise::Softsign.arc())
            }
            (a, _) => g.pointwise(h, a.pointwise().unwrap().arc()),
        }
    }

    /// Forward pass on `x: [n, input_dim]`.
    pub fn forward(&self, g: &mut Graph, bound: &Bound, x: Var, mode: Mode) -> Result<Forward> {
        let mut hidden = Vec::new();
        let mut norms = Vec::new();
        let output = match &self.layout {
            Layout::Plain(layers) => {
                let mut h = x;
                for l in layers {
                    h = Self::dense_fwd(g, bound, &l.dense, h)?;
                    h = match l.stage {
                        Stage::Hidden => {
                            let a = self.act_fwd(
                                g,
                                bound,
                                l.act.as_ref().unwrap(),
                                h,
                                mode,
                                &mut norms,
                            )?;
                            hidden.push(a);
                            a
                        }
                        Stage::Linear => h,
                        Stage::Sigmoid => g.pointwise(h, Pointwise::Sigmoid.arc())?,
                    };
                }
                h
            }
            Layout::Residual {
                stem,
                blocks,
                head_act,
                head,
            } => {
                let mut h = Self::dense_fwd(g, bound, stem, x)?;
                for b in blocks {
                    let a = self.act_fwd(g, bound, &b.act, h, mode, &mut norms)?;
                    hidden.push(a);
                    let mut branch = Self::dense_fwd(g, bound, &b.dense, a)?;
                    if b.second_softsign {
                        branch = g.pointwise(branch, Pointwise::Softsign.arc())?;
                    }
                    h = if b.residual {
                        g.add(h, branch)?
                    } else {
                        branch
                    };
                }
                let a = self.act_fwd(g, bound, head_act, h, mode, &mut norms)?;
                hidden.push(a);
                Self::dense_fwd(g, bound, head, a)?
            }
        };
        Ok(Forward {
            output,
            hidden,
            norms,
        })
    }

    /// Folds the batch statistics of a training forward pass into the
    /// running averages.
    pub fn commit_running_stats(&mut self, g: &Graph, fwd: &Forward) {
        for &(v, mean_idx, var_idx) in &fwd.norms {
            if let Some((m, s)) = g.batch_stats(v) {
                for (idx, batch) in [(mean_idx, m), (var_idx, s)] {
                    let run = self.params.get_mut(idx).value.data_mut();
                    for (r, b) in run.iter_mut().zip(batch) {
                        *r = NORM_MOMENTUM * *r + (1.0 - NORM_MOMENTUM) * b;
                    }
                }
            }
        }
    }

    /// Eval-mode outputs (logits or reconstructions).
    pub fn predict(&self, x: &Tensor) -> Result<Tensor> {
        Ok(self.predict_with_hidden(x)?.0)
    }

    /// Eval-mode outputs together with every hidden activation output.
    pub fn predict_with_hidden(&self, x: &Tensor) -> Result<(Tensor, Vec<Tensor>)> {
        let mut g = Graph::new();
        let bound = self.params.bind_frozen(&mut g);
        let xv = g.constant(x.clone());
        let f = self.forward(&mut g, &bound, xv, Mode::Eval)?;
        let hidden = f.hidden.iter().map(|v| g.value(*v).clone()).collect();
        Ok((g.value(f.output).clone(), hidden))
    }

    /// Builds the training loss for one batch and returns the graph, the
    /// bound parameters, the forward handles and the loss node.
    pub fn loss_graph(&self, x: &Tensor, target: &Tensor, loss: Loss) -> Result<Step> {
        let mut g = Graph::new();
        let bound = self.params.bind(&mut g);
        let xv = g.constant(x.clone());
        let fwd = self.forward(&mut g, &bound, xv, Mode::Train)?;
        let t = g.constant(target.clone());
        let l = loss.build(&mut g, fwd.output, t)?;
        Ok(Step {
            graph: g,
            bound,
            forward: fwd,
            loss: l,
        })
    }

    /// One optimizer step on a batch; returns the batch loss and outputs.
    pub fn train_step(
        &mut self,
        opt: &mut OptimizerState,
        x: &Tensor,
        target: &Tensor,
        loss: Loss,
    ) -> Result<(f64, Tensor)> {
        let mut step = self.loss_graph(x, target, loss)?;
        step.graph.backward(step.loss)?;
        self.params.zero_grads();
        self.params.accumulate_grads(&step.graph, &step.bound);
        opt.step(&mut self.params)?;
        self.commit_running_stats(&step.graph, &step.forward);
        let value = step.graph.value(step.loss).item();
        Ok((value, step.graph.value(step.forward.output).clone()))
    }
}

/// A built loss graph, ready for `backward`.
pub struct Step {
    pub graph: Graph,
    pub bound: Bound,
    pub forward: Forward,
    pub loss: Var,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Loss {
    /// Softmax cross-entropy against target distributions.
    CrossEntropy,
    /// Squared error summed over features, averaged over rows.
    SquaredErrorSum,
}

impl Loss {
    pub fn build(self, g: &mut Graph, output: Var, target: Var) -> Result<Var> {
        match self {
            Loss::CrossEntropy => g.softmax_cross_entropy(output, target),
            Loss::SquaredErrorSum => {
                let rows = g.value(output).rows() as f64;
                let diff = g.sub(output, target)?;
                let sq = g.squared_norm(&[diff])?;
                g.scale(sq, 1.0 / rows)
            }
        }
    }
}

impl ParamSet {
    /// Binds every parameter as a constant.
    pub fn bind_frozen(&self, g: &mut Graph) -> Bound {
        Bound(self.iter().map(|p| g.constant(p.value.clone())).collect())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub record_timing: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 20,
            batch_size: 64,
            seed: 0,
            record_timing: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochMetrics {
    pub epoch: usize,
    /// Mean batch loss over the epoch, weighted by batch size.
    pub train_loss: f64,
    /// Accuracy of the in-epoch training predictions.
    pub train_acc: f64,
    pub test_loss: f64,
    pub test_acc: f64,
    pub seconds: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Abort {
    pub epoch: usize,
    pub message: String,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainLog {
    pub epochs: Vec<EpochMetrics>,
    pub abort: Option<Abort>,
}

pub const METRIC_HEADER: &str = "epoch,train_loss,train_acc,test_loss,test_acc,seconds";

impl TrainLog {
    pub fn train_losses(&self) -> Vec<f64> {
        self.epochs.iter().map(|e| e.train_loss).collect()
    }

    /// First epoch (1-based) whose train loss is at or below `target`.
    pub fn epochs_to_train_loss(&self, target: f64) -> Option<usize> {
        self.epochs
            .iter()
            .find(|e| e.train_loss <= target)
            .map(|e| e.epoch)
    }

    /// First epoch (1-based) whose test accuracy reaches `target`.
    pub fn epochs_to_test_acc(&self, target: f64) -> Option<usize> {
        self.epochs
            .iter()
            .find(|e| e.test_acc >= target)
            .map(|e| e.epoch)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("# hermite-csv v1 metrics\n");
        s.push_str(METRIC_HEADER);
        s.push('\n');
        for e in &self.epochs {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{}",
                e.epoch, e.train_loss, e.train_acc, e.test_loss, e.test_acc, e.seconds
            );
        }
        s
    }
}

/// Loss and accuracy of `model` on `data` in eval mode.
pub fn evaluate(model: &Model, data: &Dataset) -> Result<(f64, f64)> {
    let logits = model.predict(&data.features)?;
    let mut g = Graph::new();
    let z = g.constant(logits.clone());
    let t = g.constant(data.one_hot());
    let l = g.softmax_cross_entropy(z, t)?;
    Ok((g.value(l).item(), accuracy(&logits, &data.labels)))
}

pub fn accuracy(logits: &Tensor, labels: &[usize]) -> f64 {
    let hits = logits
        .argmax_rows()
        .iter()
        .zip(labels)
        .filter(|(p, l)| p == l)
        .count();
    hits as f64 / labels.len() as f64
}

/// Minibatch training with cross-entropy on one-hot labels. The visiting
/// order of each epoch comes from a generator seeded by `cfg.seed`. A numeric
/// failure ends the run and is recorded in the log together with its epoch.
pub fn train_supervised(
    model: &mut Model,
    train: &Dataset,
    test: &Dataset,
    opt: &mut OptimizerState,
    cfg: &TrainConfig,
) -> Result<TrainLog> {
    if model.input_dim() != train.dim() || model.output_dim() != train.classes {
        return Err(Error::structural(format!(
            "model maps {} -> {} but data has D={} K={}",
            model.input_dim(),
            model.output_dim(),
            train.dim(),
            train.classes
        )));
    }
    if cfg.batch_size == 0 {
        return Err(Error::Config("batch_size must be positive".into()));
    }
    let mut order_rng = SeededRng::new(derive(cfg.seed, 0x5eed));
    let targets = train.one_hot();
    let mut log = TrainLog::default();
    for epoch in 1..=cfg.epochs {
        let start = Instant::now();
        match run_epoch(model, train, &targets, opt, cfg.batch_size, &mut order_rng)
            .and_then(|(loss, acc)| evaluate(model, test).map(|(tl, ta)| (loss, acc, tl, ta)))
        {
            Ok((train_loss, train_acc, test_loss, test_acc)) => log.epochs.push(EpochMetrics {
                epoch,
                train_loss,
                train_acc,
                test_loss,
                test_acc,
                seconds: if cfg.record_timing {
                    start.elapsed().as_secs_f64()
                } else {
                    0.0
                },
            }),
            Err(e @ Error::Numeric { .. }) => {
                log.abort = Some(Abort {
                    epoch,
                    message: e.to_string(),
                });
                break;
            }
            Err(e) => return Err(e),
        }
    }
    Ok(log)
}

fn run_epoch(
    model: &mut Model,
    train: &Dataset,
    targets: &Tensor,
    opt: &mut OptimizerState,
    batch_size: usize,
    rng: &mut SeededRng,
) -> Result<(f64, f64)> {
    let order = rng.permutation(train.len());
    let (mut loss_sum, mut hits) = (0.0, 0usize);
    for chunk in order.chunks(batch_size) {
        let x = train.features.select_rows(chunk);
        let t = targets.select_rows(chunk);
        let (loss, logits) = model.train_step(opt, &x, &t, Loss::CrossEntropy)?;
        loss_sum += loss * chunk.len() as f64;
        hits += logits
            .argmax_rows()
            .iter()
            .zip(chunk)
            .filter(|(p, i)| **p == train.labels[**i])
            .count();
    }
    let n = train.len() as f64;
    Ok((loss_sum / n, hits as f64 / n))
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReconstructionEpoch {
    pub epoch: usize,
    pub train_loss: f64,
    pub seconds: f64,
}

/// Reconstruction error (squared error summed per row, averaged) in eval mode.
pub fn reconstruction_error(model: &Model, x: &Tensor) -> Result<f64> {
    let out = model.predict(x)?;
    let se: f64 = out
        .data()
        .iter()
        .zip(x.data())
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    Ok(se / x.rows() as f64)
}

/// Trains an autoencoder to reproduce `x`. Epoch 0 records the error before
/// any update.
pub fn train_autoencoder(
    model: &mut Model,
    x: &Tensor,
    opt: &mut OptimizerState,
    cfg: &TrainConfig,
) -> Result<Vec<ReconstructionEpoch>> {
    let mut order_rng = SeededRng::new(derive(cfg.seed, 0x5eed));
    let mut log = vec![ReconstructionEpoch {
        epoch: 0,
        train_loss: reconstruction_error(model, x)?,
        seconds: 0.0,
    }];
    for epoch in 1..=cfg.epochs {
        let start = Instant::now();
        let order = order_rng.permutation(x.rows());
        let mut sum = 0.0;
        for chunk in order.chunks(cfg.batch_size.max(1)) {
            let xb = x.select_rows(chunk);
            let (l, _) = model.train_step(opt, &xb, &xb, Loss::SquaredErrorSum)?;
            sum += l * chunk.len() as f64;
        }
        log.push(ReconstructionEpoch {
            epoch,
            train_loss: sum / x.rows() as f64,
            seconds: if cfg.record_timing {
                start.elapsed().as_secs_f64()
            } else {
                0.0
            },
        });
    }
    Ok(log)
}

/// Soft-target helper: one-hot rows for `labels`.
pub fn label_targets(labels: &[usize], classes: usize) -> Tensor {
    one_hot(labels, classes)
}
