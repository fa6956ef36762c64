//! Experiment configuration, read from TOML.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bnb::DEFAULT_NODE_BUDGET;
use crate::mlp::{TrainConfig, DEFAULT_HIDDEN, DEFAULT_W2, FINE_TUNE_LR};
use crate::model::{linear_fronthaul_powers, CloudRanConfig};

pub const SWEEP_COUNTS: [usize; 5] = [2, 5, 10, 20, 50];

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("config parse error: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error("infeasible configuration: {0}")]
    Infeasible(String),
}

/// Per-RRH fronthaul link powers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FronthaulSpec {
    /// `5 + l` watts for RRH `l = 1..=L`.
    Linear,
    /// Independent uniform draws in `[lo, hi]` watts, one set per instance.
    Uniform { lo: f64, hi: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub rrhs: usize,
    pub users: usize,
    pub antennas: usize,
    #[serde(default = "default_fronthaul")]
    pub fronthaul: FronthaulSpec,
    #[serde(default = "default_halfwidth")]
    pub region_halfwidth: f64,
}

fn default_fronthaul() -> FronthaulSpec {
    FronthaulSpec::Linear
}

fn default_halfwidth() -> f64 {
    1000.0
}

impl NetworkSpec {
    pub fn new(rrhs: usize, users: usize, antennas: usize) -> Self {
        NetworkSpec {
            rrhs,
            users,
            antennas,
            fronthaul: FronthaulSpec::Linear,
            region_halfwidth: default_halfwidth(),
        }
    }

    /// Generator settings for one instance; uniform fronthaul powers are
    /// drawn from a stream of their own so positions and channels do not
    /// depend on the fronthaul model.
    pub fn generator(&self, sinr_db: f64, seed: u64) -> CloudRanConfig {
        let mut cfg = CloudRanConfig::new(self.rrhs, self.users, self.antennas, sinr_db);
        cfg.region_halfwidth = self.region_halfwidth;
        cfg.fronthaul_powers = match self.fronthaul {
            FronthaulSpec::Linear => linear_fronthaul_powers(self.rrhs),
            FronthaulSpec::Uniform { lo, hi } => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xf0f0_5eed_0000_0001);
                (0..self.rrhs).map(|_| rng.random_range(lo..=hi)).collect()
            }
        };
        cfg
    }

    fn validate(&self, what: &str) -> Result<(), ConfigError> {
        if self.rrhs == 0 || self.users == 0 || self.antennas == 0 {
            return Err(ConfigError::Invalid(format!(
                "{what}: rrhs, users and antennas must be ≥ 1"
            )));
        }
        if self.rrhs > 24 {
            return Err(ConfigError::Invalid(format!(
                "{what}: more than 24 RRHs is out of desk scale"
            )));
        }
        if let FronthaulSpec::Uniform { lo, hi } = self.fronthaul {
            if !(lo > 0.0 && hi >= lo && hi.is_finite()) {
                return Err(ConfigError::Invalid(format!(
                    "{what}: fronthaul range must satisfy 0 < lo ≤ hi"
                )));
            }
        }
        if !(self.region_halfwidth > 0.0) {
            return Err(ConfigError::Invalid(format!(
                "{what}: region_halfwidth must be positive"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSizes {
    /// Labeled instances of the original task.
    pub original: usize,
    /// Unlabeled target instances used by self-imitation.
    pub additional: usize,
    pub test: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferSettings {
    pub iterations: usize,
    pub alpha_step: f64,
    pub explore_threshold: f64,
    pub validation_fraction: f64,
    /// Per-layer fine-tuning rates; zero freezes a layer.
    pub fine_tune_lr: Vec<f64>,
    pub fine_tune_epochs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSettings {
    pub hidden: Vec<usize>,
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub momentum: f64,
    pub l2: f64,
    pub class_weight_w2: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub name: String,
    pub seed: u64,
    /// Target SINR values; one report column each.
    pub sinr_db: Vec<f64>,
    /// Original task for transfer across user counts.
    pub source_dynamic: NetworkSpec,
    /// Original task for transfer across networks.
    pub source_different: NetworkSpec,
    pub target: NetworkSpec,
    pub sizes: DatasetSizes,
    pub sweep_counts: Vec<usize>,
    pub node_budget: usize,
    /// Deployment threshold of the learned policy.
    pub policy_threshold: f64,
    /// Keep learned policies silent until a search has an incumbent.
    pub policy_after_incumbent: bool,
    pub train: TrainSettings,
    pub transfer: TransferSettings,
    pub output_dir: PathBuf,
}

impl Default for ExperimentConfig {
    /// Desk-scale settings: 6 two-antenna RRHs, 4 users in the original
    /// task and 6 in the target task.
    fn default() -> Self {
        let layers = DEFAULT_HIDDEN.len() + 1;
        ExperimentConfig {
            name: "desk".into(),
            seed: 7,
            sinr_db: vec![0.0],
            source_dynamic: NetworkSpec::new(6, 4, 2),
            source_different: NetworkSpec {
                fronthaul: FronthaulSpec::Uniform { lo: 6.0, hi: 15.0 },
                ..NetworkSpec::new(5, 4, 2)
            },
            target: NetworkSpec::new(6, 6, 2),
            sizes: DatasetSizes {
                original: 20,
                additional: 10,
                test: 10,
            },
            sweep_counts: SWEEP_COUNTS.to_vec(),
            node_budget: DEFAULT_NODE_BUDGET,
            policy_threshold: 0.5,
            policy_after_incumbent: true,
            train: TrainSettings {
                hidden: DEFAULT_HIDDEN.to_vec(),
                lr: crate::mlp::SCRATCH_LR,
                epochs: 60,
                batch_size: 32,
                momentum: 0.9,
                l2: 1e-4,
                class_weight_w2: DEFAULT_W2,
            },
            transfer: TransferSettings {
                iterations: 10,
                alpha_step: 0.2,
                explore_threshold: 0.9,
                validation_fraction: 0.2,
                fine_tune_lr: vec![FINE_TUNE_LR; layers],
                fine_tune_epochs: 10,
            },
            output_dir: PathBuf::from("runs"),
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml(&text)
    }

    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let cfg: ExperimentConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: &str| Err(ConfigError::Invalid(m.to_string()));
        if self.sinr_db.is_empty() || self.sinr_db.iter().any(|v| !v.is_finite()) {
            return bad("sinr_db must list at least one finite value");
        }
        self.source_dynamic.validate("source_dynamic")?;
        self.source_different.validate("source_different")?;
        self.target.validate("target")?;
        let s = &self.sizes;
        if s.original == 0 || s.additional == 0 || s.test == 0 {
            return bad("dataset sizes must all be ≥ 1");
        }
        if self.sweep_counts.is_empty() || self.sweep_counts.contains(&0) {
            return bad("sweep_counts must be nonempty and ≥ 1");
        }
        if self.node_budget == 0 {
            return bad("node_budget must be ≥ 1");
        }
        if !(0.0..=1.0).contains(&self.policy_threshold) {
            return bad("policy_threshold must lie in [0, 1]");
        }
        if self.train.hidden.contains(&0) {
            return bad("hidden layer widths must be ≥ 1");
        }
        let layers = self.train.hidden.len() + 1;
        if self.transfer.fine_tune_lr.len() != layers {
            return Err(ConfigError::Invalid(format!(
                "fine_tune_lr needs {layers} entries, one per layer"
            )));
        }
        self.scratch_train(0)
            .validate(layers)
            .and_then(|_| self.fine_tune(0).validate(layers))
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.self_imitation(0)
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        if self.output_dir.as_os_str().is_empty() {
            return bad("output_dir must be set");
        }
        Ok(())
    }

    pub fn layer_dims(&self) -> Vec<usize> {
        let mut d = vec![crate::features::NUM_FEATURES];
        d.extend(&self.train.hidden);
        d.push(2);
        d
    }

    pub fn scratch_train(&self, seed: u64) -> TrainConfig {
        let t = &self.train;
        TrainConfig {
            per_layer_lr: vec![t.lr; t.hidden.len() + 1],
            epochs: t.epochs,
            batch_size: t.batch_size,
            momentum: t.momentum,
            seed,
            l2: t.l2,
        }
    }

    pub fn fine_tune(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            per_layer_lr: self.transfer.fine_tune_lr.clone(),
            epochs: self.transfer.fine_tune_epochs,
            ..self.scratch_train(seed)
        }
    }

    pub fn self_imitation(&self, seed: u64) -> crate::imitate::SelfImitationConfig {
        let t = &self.transfer;
        crate::imitate::SelfImitationConfig {
            iterations: t.iterations,
            alpha_step: t.alpha_step,
            explore_threshold: t.explore_threshold,
            policy_threshold: self.policy_threshold,
            node_budget: self.node_budget,
            validation_fraction: t.validation_fraction,
            seed,
            class_weight_w2: self.train.class_weight_w2,
            fine_tune: self.fine_tune(seed),
            policy_after_incumbent: self.policy_after_incumbent,
        }
    }
}
