//! Flat `key = value` run configuration.
//!
//! Precedence, lowest first: built-in defaults, the config file, `HERMITE_*`
//! environment variables, then command-line flags.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use hermite_core::{Error, Result};

pub const ENV_PREFIX: &str = "HERMITE_";

/// Every accepted key with its default and a one-line description.
pub const KEYS: &[(&str, &str, &str)] = &[
    ("dataset", "two_moons", "two_moons | blobs | digits | mnist"),
    ("data_dir", "", "directory holding the MNIST IDX files"),
    (
        "data_seed",
        "7",
        "seed for synthetic data, splits and label noise",
    ),
    ("n_samples", "1000", "rows for two_moons and blobs"),
    ("n_test", "200", "held-out rows for synthetic data"),
    ("moons_noise", "0.1", "two_moons jitter"),
    ("classes", "3", "blob count"),
    ("dim", "2", "blob dimension"),
    ("spread", "0.5", "blob standard deviation"),
    ("digits_per_class", "100", "synthetic 8x8 digits per class"),
    ("label_noise", "0", "fraction of training labels redrawn"),
    ("hidden", "32,32", "hidden widths"),
    (
        "activation",
        "hermite",
        "hermite | hermite(d) | relu | elu | selu | sigmoid | softsign_only",
    ),
    ("degree", "4", "hermite degree when activation = hermite"),
    ("coeff_init", "relu", "relu | alternating"),
    ("train_coeffs", "true", "learn the hermite coefficients"),
    (
        "normalize",
        "false",
        "feature normalization before each activation",
    ),
    ("residual", "false", "pre-activation residual blocks"),
    (
        "second_softsign",
        "false",
        "softsign after each residual dense layer",
    ),
    ("optimizer", "sgd", "sgd | momentum | adam"),
    ("lr", "0.1", "learning rate"),
    ("momentum", "0.9", "momentum coefficient"),
    ("epochs", "50", "training epochs"),
    ("batch_size", "64", "minibatch size"),
    ("seed", "1", "model and ordering seed"),
    ("seeds", "", "comma list; runs each seed into out/seed_N"),
    (
        "record_timing",
        "false",
        "write wall-clock seconds into CSVs",
    ),
    (
        "encoder",
        "1000,500,250,30",
        "autoencoder widths below the input",
    ),
    ("n_labeled", "50", "labeled examples for saas"),
    ("inner_epochs", "5", "saas inner epochs"),
    ("outer_epochs", "30", "saas outer epochs"),
    ("lr_w", "0.1", "saas weight step"),
    ("lr_p_primal", "1", "saas posterior gradient scale"),
    ("lr_p_dual", "1", "saas posterior step"),
    ("entropy_weight", "0.1", "saas entropy weight"),
    ("entropy_floor", "0.01", "clamp inside the entropy gradient"),
    ("hard_targets", "false", "train on argmax posterior rows"),
    (
        "accuracy_threshold",
        "0.85",
        "saas epochs_to_accuracy threshold",
    ),
    (
        "dollars_per_hour",
        "24.48",
        "instance price for the cost summary",
    ),
    (
        "seconds_per_epoch",
        "0",
        "outer-epoch time for the cost summary; 0 uses measured time",
    ),
    (
        "cost_hours",
        "0",
        "extra cost line for a run of this many hours; 0 skips",
    ),
    (
        "checkpoint",
        "",
        "model checkpoint for diagnose; default out/model.ckpt",
    ),
    (
        "probes",
        "landscape,active_units,confidence",
        "diagnose probes",
    ),
    ("eta_count", "20", "landscape grid 0.05..0.05*eta_count"),
    ("probe_batch", "256", "rows used by the landscape probe"),
    ("tau", "0", "active-unit threshold fraction"),
    ("directions", "20", "confidence probe directions"),
    ("max_radius", "50", "confidence probe radii 1..max_radius"),
];

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RunConfig {
    values: BTreeMap<String, String>,
}

fn known(key: &str) -> bool {
    KEYS.iter().any(|(k, _, _)| *k == key)
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            values: KEYS
                .iter()
                .map(|(k, v, _)| (k.to_string(), v.to_string()))
                .collect(),
        }
    }
}

impl RunConfig {
    /// Parses `key = value` lines; `#` starts a comment.
    pub fn parse_into(&mut self, text: &str, origin: &str) -> Result<()> {
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("{origin}:{}: expected `key = value`", n + 1))
            })?;
            self.set(k.trim(), v.trim())
                .map_err(|e| Error::Config(format!("{origin}:{}: {e}", n + 1)))?;
        }
        Ok(())
    }

    pub fn load_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        self.parse_into(&text, &path.display().to_string())
    }

    /// Applies `HERMITE_<KEY>` variables from `vars`.
    pub fn apply_env(&mut self, vars: impl IntoIterator<Item = (String, String)>) -> Result<()> {
        let mut found: Vec<(String, String)> = vars
            .into_iter()
            .filter_map(|(k, v)| {
                k.strip_prefix(ENV_PREFIX)
                    .map(|rest| (rest.to_ascii_lowercase(), v))
            })
            .collect();
        found.sort();
        for (k, v) in found {
            self.set(&k, &v).map_err(|e| {
                Error::Config(format!("{ENV_PREFIX}{}: {e}", k.to_ascii_uppercase()))
            })?;
        }
        Ok(())
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        if !known(key) {
            return Err(Error::Config(format!("unknown key {key:?}")));
        }
        self.values.insert(key.to_string(), value.to_string());
        Ok(())
    }

    pub fn str(&self, key: &str) -> &str {
        debug_assert!(known(key), "{key}");
        self.values.get(key).map(String::as_str).unwrap_or("")
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<T> {
        let raw = self.str(key);
        raw.parse()
            .map_err(|_| Error::Config(format!("{key} = {raw:?} is not a valid value")))
    }

    pub fn list<T: FromStr>(&self, key: &str) -> Result<Vec<T>> {
        self.str(key)
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| {
                s.parse()
                    .map_err(|_| Error::Config(format!("{key}: bad list entry {s:?}")))
            })
            .collect()
    }

    /// The fully resolved config, one sorted `key = value` line per key.
    pub fn render(&self) -> String {
        let mut s = String::from("# hermite resolved config v1\n");
        for (k, v) in &self.values {
            let _ = writeln!(s, "{k} = {v}");
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_comments_and_blank_lines() {
        let mut c = RunConfig::default();
        c.parse_into("# header\n\nepochs = 3  # short\n lr=0.5\n", "t")
            .unwrap();
        assert_eq!(c.get::<usize>("epochs").unwrap(), 3);
        assert_eq!(c.get::<f64>("lr").unwrap(), 0.5);
    }

    #[test]
    fn rejects_unknown_keys_and_bad_lines() {
        let mut c = RunConfig::default();
        assert!(matches!(
            c.parse_into("epoch = 3", "t"),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            c.parse_into("epochs 3", "t"),
            Err(Error::Config(_))
        ));
        c.set("epochs", "three").unwrap();
        assert!(matches!(c.get::<usize>("epochs"), Err(Error::Config(_))));
    }

    #[test]
    fn env_overrides_and_unknown_env_keys() {
        let mut c = RunConfig::default();
        c.apply_env([
            ("HERMITE_LR".to_string(), "0.25".to_string()),
            ("PATH".to_string(), "/bin".to_string()),
        ])
        .unwrap();
        assert_eq!(c.get::<f64>("lr").unwrap(), 0.25);
        assert!(c
            .apply_env([("HERMITE_NOPE".to_string(), "1".to_string())])
            .is_err());
    }

    #[test]
    fn render_round_trips() {
        let mut c = RunConfig::default();
        c.set("hidden", "8,8,8").unwrap();
        let mut d = RunConfig::default();
        d.parse_into(&c.render(), "r").unwrap();
        assert_eq!(c, d);
        assert_eq!(d.list::<usize>("hidden").unwrap(), vec![8, 8, 8]);
        assert!(d.list::<usize>("seeds").unwrap().is_empty());
    }
}
