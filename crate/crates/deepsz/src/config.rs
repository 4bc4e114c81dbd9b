//! Pipeline configuration: a flat `key = value` file.
//!
//! Keys carry a section prefix (`train.epochs`, `assess.expected_loss`).
//! Blank lines and lines starting with `#` are ignored; lists are comma
//! separated. Every key is optional and defaults to the LeNet-300-100 setup.
//!
//! ```text
//! seed = 1
//! data.dir = data/mnist
//! net.dims = 784, 300, 100, 10
//! train.epochs = 20
//! prune.keep_ratios = 0.08, 0.09, 0.26
//! assess.expected_loss = 0.2
//! plan.mode = accuracy
//! out.dir = runs/lenet300
//! ```

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use deepsz_core::assessor::AssessConfig;
use deepsz_core::netmodel::TrainConfig;
use deepsz_core::pruner::PruneSpec;

use crate::checkpoint::read_file;
use crate::Error;

/// Environment variable naming the dataset directory when the config does not.
pub const DATA_DIR_ENV: &str = "DEEPSZ_DATA_DIR";
pub const DEFAULT_DATA_DIR: &str = "data/mnist";

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ConfigError {
    #[error("line {line}: expected `key = value`")]
    Syntax { line: usize },
    #[error("line {line}: duplicate key `{key}`")]
    Duplicate { line: usize, key: String },
    #[error("unknown key `{0}`")]
    UnknownKey(String),
    #[error("invalid value for `{key}`: {value:?}")]
    Value { key: String, value: String },
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlannerMode {
    /// Minimize size under an accuracy-loss budget (percentage points).
    Accuracy,
    /// Minimize loss under a byte budget on the summed data-array sizes.
    Ratio,
}

impl FromStr for PlannerMode {
    type Err = ();
    fn from_str(s: &str) -> Result<Self, ()> {
        match s {
            "accuracy" => Ok(Self::Accuracy),
            "ratio" => Ok(Self::Ratio),
            _ => Err(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DataPaths {
    pub train_images: PathBuf,
    pub train_labels: PathBuf,
    pub test_images: PathBuf,
    pub test_labels: PathBuf,
}

impl DataPaths {
    pub fn in_dir(dir: &Path) -> Self {
        Self {
            train_images: dir.join("train-images-idx3-ubyte"),
            train_labels: dir.join("train-labels-idx1-ubyte"),
            test_images: dir.join("t10k-images-idx3-ubyte"),
            test_labels: dir.join("t10k-labels-idx1-ubyte"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub seed: u64,
    pub data: DataPaths,
    pub dims: Vec<usize>,
    pub train: TrainConfig,
    pub prune: PruneSpec,
    pub retrain: TrainConfig,
    pub assess: AssessConfig,
    pub mode: PlannerMode,
    /// ε⋆ in accuracy mode (defaults to `assess.expected_loss`), bytes in
    /// ratio mode (required).
    pub budget: Option<f64>,
    pub out_dir: PathBuf,
}

impl PipelineConfig {
    /// Defaults with the dataset directory taken from [`DATA_DIR_ENV`].
    pub fn with_env_defaults() -> Self {
        let dir = std::env::var_os(DATA_DIR_ENV).map_or_else(|| PathBuf::from(DEFAULT_DATA_DIR), PathBuf::from);
        Self {
            seed: 1,
            data: DataPaths::in_dir(&dir),
            dims: vec![784, 300, 100, 10],
            train: TrainConfig { weight_decay: 5e-4, ..TrainConfig::default() },
            prune: PruneSpec { keep_ratios: vec![0.08, 0.09, 0.26] },
            retrain: TrainConfig {
                learning_rate: 0.05,
                momentum: 0.9,
                epochs: 12,
                lr_decay: 0.8,
                weight_decay: 5e-4,
                ..TrainConfig::default()
            },
            assess: AssessConfig::default(),
            mode: PlannerMode::Accuracy,
            budget: None,
            out_dir: PathBuf::from("runs/deepsz"),
        }
    }

    pub fn load(path: &Path) -> Result<Self, Error> {
        let bytes = read_file(path)?;
        let text = String::from_utf8(bytes)
            .map_err(|_| Error::config(path, ConfigError::Invalid("config is not UTF-8".into())))?;
        Self::parse(&text).map_err(|e| Error::config(path, e))
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut map = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or(ConfigError::Syntax { line: i + 1 })?;
            let (k, v) = (k.trim(), v.trim());
            if k.is_empty() {
                return Err(ConfigError::Syntax { line: i + 1 });
            }
            if map.insert(k.to_string(), v.to_string()).is_some() {
                return Err(ConfigError::Duplicate { line: i + 1, key: k.to_string() });
            }
        }
        let mut cfg = Self::with_env_defaults();
        let mut keys = Keys { map };
        keys.set("seed", &mut cfg.seed)?;
        if let Some(dir) = keys.take::<PathBuf>("data.dir")? {
            cfg.data = DataPaths::in_dir(&dir);
        }
        keys.set("data.train_images", &mut cfg.data.train_images)?;
        keys.set("data.train_labels", &mut cfg.data.train_labels)?;
        keys.set("data.test_images", &mut cfg.data.test_images)?;
        keys.set("data.test_labels", &mut cfg.data.test_labels)?;
        if let Some(dims) = keys.take_list("net.dims")? {
            cfg.dims = dims;
        }
        for (prefix, t) in [("train", &mut cfg.train), ("retrain", &mut cfg.retrain)] {
            keys.set(&format!("{prefix}.learning_rate"), &mut t.learning_rate)?;
            keys.set(&format!("{prefix}.momentum"), &mut t.momentum)?;
            keys.set(&format!("{prefix}.batch_size"), &mut t.batch_size)?;
            keys.set(&format!("{prefix}.epochs"), &mut t.epochs)?;
            keys.set(&format!("{prefix}.weight_decay"), &mut t.weight_decay)?;
            keys.set(&format!("{prefix}.lr_decay"), &mut t.lr_decay)?;
        }
        if let Some(r) = keys.take_list("prune.keep_ratios")? {
            cfg.prune.keep_ratios = r;
        }
        if let Some(g) = keys.take_list("assess.coarse_grid")? {
            cfg.assess.coarse_grid = g;
        }
        keys.set("assess.distortion_criterion", &mut cfg.assess.distortion_criterion)?;
        keys.set("assess.expected_loss", &mut cfg.assess.expected_loss)?;
        keys.set("assess.quant_bins", &mut cfg.assess.quant_bins)?;
        keys.set("assess.max_bound", &mut cfg.assess.max_bound)?;
        keys.set("plan.mode", &mut cfg.mode)?;
        cfg.budget = keys.take("plan.budget")?.or(cfg.budget);
        keys.set("out.dir", &mut cfg.out_dir)?;
        if let Some(k) = keys.map.into_keys().next() {
            return Err(ConfigError::UnknownKey(k));
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |m: String| Err(ConfigError::Invalid(m));
        if self.dims.len() < 2 || self.dims.contains(&0) {
            return invalid("net.dims needs at least two positive sizes".into());
        }
        if self.prune.keep_ratios.len() != self.dims.len() - 1 {
            return invalid(format!(
                "prune.keep_ratios has {} entries for {} layers",
                self.prune.keep_ratios.len(),
                self.dims.len() - 1
            ));
        }
        if let Err(e) = PruneSpec::new(self.prune.keep_ratios.clone()) {
            return invalid(e.to_string());
        }
        self.train.validate().or_else(|e| invalid(format!("train: {e}")))?;
        self.retrain.validate().or_else(|e| invalid(format!("retrain: {e}")))?;
        self.assess.validate().or_else(|e| invalid(e.to_string()))?;
        match (self.mode, self.budget) {
            (_, Some(b)) if !(b > 0.0 && b.is_finite()) => invalid(format!("plan.budget must be positive, got {b}")),
            (PlannerMode::Ratio, None) => invalid("plan.mode = ratio needs plan.budget (bytes)".into()),
            _ => Ok(()),
        }
    }

    /// ε⋆ used by the planner in accuracy mode.
    pub fn expected_loss(&self) -> f64 {
        self.budget.unwrap_or(self.assess.expected_loss)
    }

    /// Training config with the pipeline seed applied.
    pub fn train_config(&self) -> TrainConfig {
        TrainConfig { seed: self.seed, ..self.train.clone() }
    }

    /// Retraining config; its shuffle stream is decorrelated from training.
    pub fn retrain_config(&self) -> TrainConfig {
        TrainConfig { seed: self.seed.wrapping_add(0x5eed), ..self.retrain.clone() }
    }
}

struct Keys {
    map: BTreeMap<String, String>,
}

impl Keys {
    fn take<T: FromStr>(&mut self, key: &str) -> Result<Option<T>, ConfigError> {
        match self.map.remove(key) {
            None => Ok(None),
            Some(v) => v.parse().map(Some).map_err(|_| ConfigError::Value { key: key.into(), value: v }),
        }
    }

    fn set<T: FromStr>(&mut self, key: &str, slot: &mut T) -> Result<(), ConfigError> {
        if let Some(v) = self.take(key)? {
            *slot = v;
        }
        Ok(())
    }

    fn take_list<T: FromStr>(&mut self, key: &str) -> Result<Option<Vec<T>>, ConfigError> {
        let Some(v) = self.map.remove(key) else {
            return Ok(None);
        };
        v.split(',')
            .map(|s| s.trim().parse())
            .collect::<Result<Vec<T>, _>>()
            .map(Some)
            .map_err(|_| ConfigError::Value { key: key.into(), value: v })
    }
}
