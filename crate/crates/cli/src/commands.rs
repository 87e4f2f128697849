use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use hermite_core::activations::CoeffInit;
use hermite_core::autodiff::{load_checkpoint, save_checkpoint};
use hermite_core::data::{
    inject_label_noise, load_mnist_dir, make_ssl_split, synth_blobs, synth_digits, synth_two_moons,
};
use hermite_core::diagnostics::{
    active_unit_census, confidence_profile, csv_block, default_eta_grid, loss_along_gradient,
    random_direction,
};
use hermite_core::hermite::{relu_expansion_coefficients, relu_l2_residual};
use hermite_core::models::{train_autoencoder, train_supervised, Loss};
use hermite_core::rng::{derive, SeededRng};
use hermite_core::saas::{
    cost_from_hours, cost_model, epochs_to_accuracy, saas_train, SaasConfig, SaasResult,
};
use hermite_core::{
    Activation, AutoencoderSpec, Dataset, Error, GaussianQuadrature, MlpSpec, Model, OptimizerKind,
    OptimizerState, Result, Tensor, TrainConfig,
};

use crate::config::RunConfig;

pub fn write_file(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn create_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Outcome of a run that finished writing its outputs.
#[derive(Debug, Default)]
pub struct Outcome {
    /// Set when training stopped on a non-finite value.
    pub numeric_abort: Option<String>,
    pub stdout: String,
}

/// Train and test sets, inputs normalized with the training means.
pub struct Data {
    pub train: Dataset,
    pub test: Dataset,
}

pub fn activation(cfg: &RunConfig) -> Result<Activation> {
    let name = cfg.str("activation");
    let act: Activation = name.parse()?;
    Ok(match act {
        Activation::Hermite { .. } if name.trim().eq_ignore_ascii_case("hermite") => {
            Activation::Hermite {
                degree: cfg.get("degree")?,
            }
        }
        a => a,
    })
}

fn check_data_dir(cfg: &RunConfig) -> Result<PathBuf> {
    let dir = cfg.str("data_dir");
    if dir.is_empty() {
        return Err(Error::Config("dataset = mnist needs data_dir".into()));
    }
    let dir = PathBuf::from(dir);
    if !dir.is_dir() {
        return Err(Error::Config(format!(
            "data_dir {} is not a directory",
            dir.display()
        )));
    }
    Ok(dir)
}

/// Validates the dataset keys without loading anything.
pub fn check_dataset(cfg: &RunConfig) -> Result<()> {
    match cfg.str("dataset") {
        "two_moons" | "blobs" | "digits" => Ok(()),
        "mnist" => check_data_dir(cfg).map(|_| ()),
        other => Err(Error::Config(format!("unknown dataset {other:?}"))),
    }
}

fn raw_dataset(cfg: &RunConfig) -> Result<(Dataset, Option<Dataset>)> {
    let seed: u64 = cfg.get("data_seed")?;
    Ok(match cfg.str("dataset") {
        "two_moons" => (
            synth_two_moons(cfg.get("n_samples")?, cfg.get("moons_noise")?, seed)?,
            None,
        ),
        "blobs" => {
            let k: usize = cfg.get("classes")?;
            let n: usize = cfg.get("n_samples")?;
            let all = synth_blobs(k, n.div_ceil(k), cfg.get("dim")?, cfg.get("spread")?, seed)?;
            (all.subset(&(0..n).collect::<Vec<_>>())?, None)
        }
        "digits" => (synth_digits(cfg.get("digits_per_class")?, seed)?, None),
        "mnist" => {
            let (train, test) = load_mnist_dir(&check_data_dir(cfg)?)?;
            (train, Some(test))
        }
        other => return Err(Error::Config(format!("unknown dataset {other:?}"))),
    })
}

/// Loads the configured dataset, splits it and applies label noise.
pub fn load_data(cfg: &RunConfig, center: bool) -> Result<Data> {
    let seed: u64 = cfg.get("data_seed")?;
    let (all, test) = raw_dataset(cfg)?;
    let (mut train, mut test) = match test {
        Some(t) => (all, t),
        None => all.train_test_split(cfg.get("n_test")?, seed)?,
    };
    let noise: f64 = cfg.get("label_noise")?;
    if noise > 0.0 {
        train.labels = inject_label_noise(&train.labels, train.classes, noise, seed)?.0;
    }
    if center {
        let means = train.mean_normalize();
        test.center(&means);
    }
    Ok(Data { train, test })
}

pub fn mlp_spec(cfg: &RunConfig, input: usize, classes: usize) -> Result<MlpSpec> {
    let mut widths = vec![input];
    widths.extend(cfg.list::<usize>("hidden")?);
    widths.push(classes);
    let mut spec = MlpSpec::new(widths, activation(cfg)?)
        .normalized(cfg.get("normalize")?)
        .residual(cfg.get("residual")?);
    spec.second_softsign = cfg.get("second_softsign")?;
    spec.coeff_init = cfg.str("coeff_init").parse::<CoeffInit>()?;
    spec.train_coeffs = cfg.get("train_coeffs")?;
    Ok(spec)
}

fn optimizer(cfg: &RunConfig) -> Result<OptimizerState> {
    let lr: f64 = cfg.get("lr")?;
    let kind = match cfg.str("optimizer") {
        "sgd" => OptimizerKind::Sgd,
        "momentum" => OptimizerKind::SgdMomentum {
            momentum: cfg.get("momentum")?,
        },
        "adam" => OptimizerKind::Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        },
        other => return Err(Error::Config(format!("unknown optimizer {other:?}"))),
    };
    OptimizerState::new(kind, lr)
}

fn train_config(cfg: &RunConfig) -> Result<TrainConfig> {
    Ok(TrainConfig {
        epochs: cfg.get("epochs")?,
        batch_size: cfg.get("batch_size")?,
        seed: cfg.get("seed")?,
        record_timing: cfg.get("record_timing")?,
    })
}

pub fn train(cfg: &RunConfig, out: &Path) -> Result<Outcome> {
    check_dataset(cfg)?;
    // surface config mistakes before loading data
    mlp_spec(cfg, 1, 1)?;
    let data = load_data(cfg, true)?;
    let spec = mlp_spec(cfg, data.train.dim(), data.train.classes)?;
    let tc = train_config(cfg)?;
    let mut model = Model::mlp(&spec, tc.seed)?;
    let mut opt = optimizer(cfg)?;
    let log = train_supervised(&mut model, &data.train, &data.test, &mut opt, &tc)?;
    write_file(&out.join("metrics.csv"), &log.to_csv())?;
    save_checkpoint(&out.join("model.ckpt"), &model.params().named_arrays())?;
    let mut outcome = Outcome::default();
    if let Some(last) = log.epochs.last() {
        let _ = writeln!(
            outcome.stdout,
            "{}: {} epochs, train loss {:.6}, test acc {:.4}",
            spec.activation,
            log.epochs.len(),
            last.train_loss,
            last.test_acc
        );
    }
    outcome.numeric_abort = log
        .abort
        .map(|a| format!("numeric abort at epoch {}: {}", a.epoch, a.message));
    Ok(outcome)
}

pub fn autoencoder(cfg: &RunConfig, out: &Path) -> Result<Outcome> {
    check_dataset(cfg)?;
    let data = load_data(cfg, false)?;
    let mut encoder = vec![data.train.dim()];
    encoder.extend(cfg.list::<usize>("encoder")?);
    let spec = AutoencoderSpec {
        encoder,
        activation: activation(cfg)?,
        normalize: cfg.get("normalize")?,
    };
    let tc = train_config(cfg)?;
    let mut model = Model::autoencoder(&spec, tc.seed)?;
    let mut opt = optimizer(cfg)?;
    let mut outcome = Outcome::default();
    let log = match train_autoencoder(&mut model, &data.train.features, &mut opt, &tc) {
        Ok(log) => log,
        Err(Error::Numeric { op, detail }) => {
            outcome.numeric_abort = Some(format!("numeric abort in {op}: {detail}"));
            Vec::new()
        }
        Err(e) => return Err(e),
    };
    let mut csv = String::from("# hermite-csv v1 reconstruction\nepoch,train_loss,seconds\n");
    for e in &log {
        let _ = writeln!(csv, "{},{},{}", e.epoch, e.train_loss, e.seconds);
    }
    write_file(&out.join("metrics.csv"), &csv)?;
    save_checkpoint(&out.join("model.ckpt"), &model.params().named_arrays())?;
    if let (Some(first), Some(last)) = (log.first(), log.last()) {
        let _ = writeln!(
            outcome.stdout,
            "{}: reconstruction error {:.4} -> {:.4}",
            spec.activation, first.train_loss, last.train_loss
        );
    }
    Ok(outcome)
}

fn saas_config(cfg: &RunConfig) -> Result<SaasConfig> {
    let c = SaasConfig {
        inner_epochs: cfg.get("inner_epochs")?,
        outer_epochs: cfg.get("outer_epochs")?,
        lr_w: cfg.get("lr_w")?,
        lr_p_primal: cfg.get("lr_p_primal")?,
        lr_p_dual: cfg.get("lr_p_dual")?,
        entropy_weight: cfg.get("entropy_weight")?,
        entropy_floor: cfg.get("entropy_floor")?,
        batch_size: cfg.get("batch_size")?,
        seed: cfg.get("seed")?,
        hard_targets: cfg.get("hard_targets")?,
        record_timing: cfg.get("record_timing")?,
    };
    c.validate().map_err(|e| Error::Config(e.to_string()))?;
    Ok(c)
}

fn posterior_csv(p: &Tensor) -> String {
    let k = p.row_len();
    let mut s = String::from("# hermite-csv v1 posterior\nindex");
    for c in 0..k {
        let _ = write!(s, ",p{c}");
    }
    s.push('\n');
    for i in 0..p.rows() {
        let row: Vec<String> = p.row(i).iter().map(|v| v.to_string()).collect();
        let _ = writeln!(s, "{i},{}", row.join(","));
    }
    s
}

pub const SUMMARY_HEADER: &str =
    "arm,activation,max_pl_acc,epochs_to_accuracy,threshold,hours,dollars";

fn summary_row(arm: &str, act: Activation, r: &SaasResult, cfg: &RunConfig) -> Result<String> {
    let threshold: f64 = cfg.get("accuracy_threshold")?;
    let rate: f64 = cfg.get("dollars_per_hour")?;
    let mut sec: f64 = cfg.get("seconds_per_epoch")?;
    if sec <= 0.0 && !r.log.is_empty() {
        sec = r.log.iter().map(|e| e.seconds).sum::<f64>() / r.log.len() as f64;
    }
    let (hours, dollars) = if sec > 0.0 && !r.log.is_empty() {
        let (h, d) = cost_model(r.log.len() as f64, sec, rate)?;
        (format!("{h:.4}"), format!("{d:.2}"))
    } else {
        ("n/a".to_string(), "n/a".to_string())
    };
    let max = r
        .max_accuracy()
        .map_or("n/a".to_string(), |a| format!("{a:.4}"));
    let e =
        epochs_to_accuracy(&r.accuracies(), threshold).map_or("n/a".to_string(), |e| e.to_string());
    Ok(format!(
        "{arm},{act},{max},{e},{threshold},{hours},{dollars}"
    ))
}

pub fn saas(cfg: &RunConfig, out: &Path, compare_relu: bool) -> Result<Outcome> {
    check_dataset(cfg)?;
    let sc = saas_config(cfg)?;
    let (mut all, _) = raw_dataset(cfg)?;
    all.mean_normalize();
    let split = make_ssl_split(&all, cfg.get("n_labeled")?, cfg.get("data_seed")?)?;
    let labeled = all.subset(&split.labeled)?;
    let unlabeled = all.subset(&split.unlabeled)?;
    let spec = mlp_spec(cfg, all.dim(), all.classes)?;
    let mut arms = vec![("H", spec.clone())];
    if compare_relu {
        arms[0].0 = if matches!(spec.activation, Activation::Hermite { .. }) {
            "H"
        } else {
            "A"
        };
        arms.push((
            "R",
            MlpSpec {
                activation: Activation::Relu,
                ..spec.clone()
            },
        ));
    }
    let mut summary = format!("# hermite-csv v1 saas-summary\n{SUMMARY_HEADER}\n");
    let mut outcome = Outcome::default();
    for (arm, spec) in &arms {
        let r = saas_train(
            spec,
            &labeled,
            &unlabeled.features,
            Some(&unlabeled.labels),
            &sc,
            |_, _| {},
        )?;
        let suffix = if *arm == "R" { "_relu" } else { "" };
        write_file(&out.join(format!("saas{suffix}.csv")), &r.to_csv())?;
        write_file(
            &out.join(format!("posterior{suffix}.csv")),
            &posterior_csv(&r.posterior),
        )?;
        summary.push_str(&summary_row(arm, spec.activation, &r, cfg)?);
        summary.push('\n');
        if let Some((epoch, msg)) = &r.aborted_at {
            outcome.numeric_abort = Some(format!(
                "{arm} arm: numeric abort at outer epoch {epoch}: {msg}"
            ));
        }
    }
    let hours: f64 = cfg.get("cost_hours")?;
    if hours > 0.0 {
        let rate: f64 = cfg.get("dollars_per_hour")?;
        let _ = writeln!(
            summary,
            "# cost of {hours} h at ${rate}/h = ${:.2}",
            cost_from_hours(hours, rate)?
        );
    }
    write_file(&out.join("summary.csv"), &summary)?;
    outcome.stdout = summary;
    Ok(outcome)
}

pub fn diagnose(cfg: &RunConfig, out: &Path, probes: &[String]) -> Result<Outcome> {
    check_dataset(cfg)?;
    for p in probes {
        if !matches!(p.as_str(), "landscape" | "active_units" | "confidence") {
            return Err(Error::Config(format!("unknown probe {p:?}")));
        }
    }
    let ckpt = match cfg.str("checkpoint") {
        "" => out.join("model.ckpt"),
        p => PathBuf::from(p),
    };
    let arrays = load_checkpoint(&ckpt)?;
    let data = load_data(cfg, true)?;
    let spec = mlp_spec(cfg, data.train.dim(), data.train.classes)?;
    let mut model = Model::mlp(&spec, cfg.get("seed")?)?;
    model.params_mut().load_arrays(&arrays)?;
    let mut outcome = Outcome::default();
    for probe in probes {
        let text = match probe.as_str() {
            "landscape" => {
                let n = data.train.len().min(cfg.get("probe_batch")?);
                let idx: Vec<usize> = (0..n).collect();
                let batch = data.train.subset(&idx)?;
                let etas = default_eta_grid(cfg.get("eta_count")?);
                let p = loss_along_gradient(
                    &model,
                    &batch.features,
                    &batch.one_hot(),
                    Loss::CrossEntropy,
                    &etas,
                )?;
                let rows: Vec<Vec<f64>> = p
                    .etas
                    .iter()
                    .zip(&p.losses)
                    .map(|(e, l)| vec![*e, *l])
                    .collect();
                csv_block("landscape", &format!("batch={n}"), "eta,loss", &rows)
            }
            "active_units" => {
                let tau: f64 = cfg.get("tau")?;
                let fr = active_unit_census(&model, &data.test.features, tau)?;
                let rows: Vec<Vec<f64>> = fr
                    .iter()
                    .enumerate()
                    .map(|(i, f)| vec![i as f64, *f])
                    .collect();
                csv_block(
                    "active_units",
                    &format!("tau={tau}"),
                    "layer,active_fraction",
                    &rows,
                )
            }
            _ => {
                let count: usize = cfg.get("directions")?;
                let max_r: usize = cfg.get("max_radius")?;
                let radii: Vec<f64> = (1..=max_r).map(|r| r as f64).collect();
                let mut rng = SeededRng::new(derive(cfg.get("seed")?, 0xd1));
                let mut rows = Vec::with_capacity(count * max_r);
                for d in 0..count {
                    let dir = random_direction(&mut rng, model.input_dim());
                    for (r, c) in radii.iter().zip(confidence_profile(&model, &dir, &radii)?) {
                        rows.push(vec![d as f64, *r, c]);
                    }
                }
                csv_block(
                    "confidence",
                    &format!("directions={count} max_radius={max_r}"),
                    "direction,radius,max_softmax",
                    &rows,
                )
            }
        };
        write_file(&out.join(format!("diag_{probe}.csv")), &text)?;
        let _ = writeln!(outcome.stdout, "wrote diag_{probe}.csv");
    }
    Ok(outcome)
}

pub fn coeffs(cfg: &RunConfig, out: &Path) -> Result<Outcome> {
    let d: usize = cfg.get("degree")?;
    let quad = GaussianQuadrature::for_expansions();
    let c = relu_expansion_coefficients(d, &quad)?;
    let mut csv =
        String::from("# hermite-csv v1 coeffs\nindex,coefficient,residual_through_index\n");
    let mut table = String::from("  i  coefficient    residual\n");
    for (i, ci) in c.iter().enumerate() {
        let r = relu_l2_residual(i, &quad)?;
        let _ = writeln!(csv, "{i},{ci},{r}");
        let _ = writeln!(table, "{i:>3}  {ci:>12.7}  {r:>10.7}");
    }
    write_file(&out.join("coeffs.csv"), &csv)?;
    Ok(Outcome {
        numeric_abort: None,
        stdout: table,
    })
}

/// Runs `f` for every seed in `seeds` on `jobs` threads, each in `out/seed_N`
/// with its own resolved config.
pub fn run_seeds(
    cfg: &RunConfig,
    out: &Path,
    seeds: &[u64],
    jobs: usize,
    f: &(dyn Fn(&RunConfig, &Path) -> Result<Outcome> + Sync),
) -> Result<Outcome> {
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<(usize, Result<Outcome>)>> = Mutex::new(Vec::new());
    std::thread::scope(|s| {
        for _ in 0..jobs.clamp(1, seeds.len().max(1)) {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(seed) = seeds.get(i) else { break };
                let run = || -> Result<Outcome> {
                    let mut c = cfg.clone();
                    c.set("seed", &seed.to_string())?;
                    c.set("seeds", "")?;
                    let dir = out.join(format!("seed_{seed}"));
                    create_dir(&dir)?;
                    write_file(&dir.join("config.resolved"), &c.render())?;
                    f(&c, &dir)
                };
                let r = run();
                results.lock().unwrap().push((i, r));
            });
        }
    });
    let mut results = results.into_inner().unwrap();
    results.sort_by_key(|(i, _)| *i);
    let mut merged = Outcome::default();
    for (i, r) in results {
        let o = r?;
        let _ = write!(merged.stdout, "[seed {}]\n{}", seeds[i], o.stdout);
        if merged.numeric_abort.is_none() {
            merged.numeric_abort = o.numeric_abort;
        }
    }
    Ok(merged)
}

pub fn prepare_out(out: &Path, cfg: &RunConfig) -> Result<()> {
    create_dir(out)?;
    write_file(&out.join("config.resolved"), &cfg.render())
}
