//! `hermite`: seeded experiment runner writing CSV metrics.

mod commands;
mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use hermite_core::{Error, Result};

use commands::Outcome;
use config::RunConfig;

type RunFn = dyn Fn(&RunConfig, &Path) -> Result<Outcome> + Sync;

#[derive(Parser, Debug)]
#[command(
    name = "hermite",
    version,
    about = "Hermite-activation experiment runner"
)]
struct Cli {
    /// Flat `key = value` config file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the `seed` key.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = "runs/latest")]
    out: PathBuf,
    /// Worker threads for multi-seed runs (`seeds = 1,2,3`).
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,
    /// Extra `key=value` overrides, applied last.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Supervised MLP training.
    Train,
    /// Deep autoencoder reconstruction benchmark.
    Autoencoder,
    /// Two-loop pseudo-labeling.
    Saas {
        /// Also run a ReLU arm with the same seed.
        #[arg(long)]
        compare_relu: bool,
    },
    /// Landscape, active-unit and confidence probes on a checkpoint.
    Diagnose {
        /// Comma list of landscape, active_units, confidence.
        #[arg(long)]
        probe: Option<String>,
    },
    /// ReLU expansion coefficients and residuals.
    Coeffs {
        #[arg(long)]
        degree: Option<usize>,
    },
}

fn resolve(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = RunConfig::default();
    if let Some(path) = &cli.config {
        cfg.load_file(path)?;
    }
    cfg.apply_env(std::env::vars())?;
    if let Some(seed) = cli.seed {
        cfg.set("seed", &seed.to_string())?;
    }
    match &cli.command {
        Command::Diagnose { probe: Some(p) } => cfg.set("probes", p)?,
        Command::Coeffs { degree: Some(d) } => cfg.set("degree", &d.to_string())?,
        _ => {}
    }
    for kv in &cli.set {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("--set expects KEY=VALUE, got {kv:?}")))?;
        cfg.set(k.trim(), v.trim())?;
    }
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<Outcome> {
    let cfg = resolve(cli)?;
    commands::prepare_out(&cli.out, &cfg)?;
    let seeds: Vec<u64> = cfg.list("seeds")?;
    let one: Box<RunFn> = match &cli.command {
        Command::Train => Box::new(commands::train),
        Command::Autoencoder => Box::new(commands::autoencoder),
        Command::Saas { compare_relu } => {
            let c = *compare_relu;
            Box::new(move |cfg, out| commands::saas(cfg, out, c))
        }
        Command::Diagnose { .. } => Box::new(|cfg, out| {
            let probes: Vec<String> = cfg.list("probes")?;
            commands::diagnose(cfg, out, &probes)
        }),
        Command::Coeffs { .. } => Box::new(commands::coeffs),
    };
    if seeds.is_empty() {
        one(&cfg, &cli.out)
    } else {
        commands::run_seeds(&cfg, &cli.out, &seeds, cli.jobs, one.as_ref())
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::Domain(_) | Error::Structural(_) => 2,
        Error::Numeric { .. } => 3,
        Error::Io { .. } | Error::Format { .. } => 4,
        Error::Invariant(_) | Error::Undefined(_) => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(outcome) => {
            print!("{}", outcome.stdout);
            match outcome.numeric_abort {
                Some(msg) => {
                    eprintln!("error: {msg}");
                    ExitCode::from(3)
                }
                None => ExitCode::SUCCESS,
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
