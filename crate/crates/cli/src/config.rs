//! The experiment configuration file.
//!
//! One TOML document describes a whole experiment. Every random stream is
//! derived from the single top-level `seed` (plus the synthetic data seed),
//! so a directory's `config.toml` is enough to regenerate all its results.

use std::path::{Path, PathBuf};

use cohesive::cohesion::{ClassSignal, SamplerConfig, SamplingMode, UnconditionalSide, DEFAULT_EPS_ZERO};
use cohesive::model::ModelSpec;
use cohesive::rng::derive_seed;
use cohesive::trainer::OptimConfig;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Master seed; split, initialization, batch order and sampling seeds
    /// are derived from it.
    #[serde(default)]
    pub seed: u64,
    /// Output directory, used when `--out` is not given. Relative paths are
    /// taken from the working directory.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<PathBuf>,
    pub data: DataConfig,
    #[serde(default)]
    pub split: SplitConfig,
    pub model: ModelConfig,
    #[serde(default)]
    pub training: TrainingConfig,
    #[serde(default)]
    pub sampling: SamplingConfig,
    #[serde(default)]
    pub groups: GroupsConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "lowercase", deny_unknown_fields)]
pub enum DataConfig {
    /// Directory with the CIFAR-10 binary batches. A relative path is
    /// resolved against the directory of the config file.
    Cifar10 {
        path: PathBuf,
        /// Stratified subset of the training side to use instead of all of it.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        train_subset: Option<usize>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        test_subset: Option<usize>,
    },
    /// Gaussian blobs; the test side comes from the same distribution.
    Synthetic {
        classes: usize,
        dim: usize,
        train_per_class: usize,
        test_per_class: usize,
        separation: f64,
        #[serde(default)]
        seed: u64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitConfig {
    pub compact_size: usize,
}

impl Default for SplitConfig {
    fn default() -> Self {
        SplitConfig { compact_size: 512 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ModelConfig {
    Linear,
    Mlp {
        #[serde(default = "default_hidden")]
        hidden: Vec<usize>,
    },
    CnnSmall {
        /// `[channels, height, width]`; defaults to 3x32x32 for CIFAR-10.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        input_shape: Option<[usize; 3]>,
        #[serde(default = "default_conv1")]
        conv1: usize,
        #[serde(default = "default_conv2")]
        conv2: usize,
    },
}

fn default_hidden() -> Vec<usize> {
    vec![256, 256]
}

fn default_conv1() -> usize {
    16
}

fn default_conv2() -> usize {
    32
}

/// Optimizer settings of the training phase.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub epochs: usize,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        let o = OptimConfig::default();
        TrainingConfig {
            learning_rate: o.learning_rate,
            momentum: o.momentum,
            weight_decay: o.weight_decay,
            batch_size: o.batch_size,
            epochs: o.epochs,
        }
    }
}

/// The low learning-rate continuation and the cohesion accumulation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplingConfig {
    pub learning_rate: f64,
    /// Momentum during the continuation. Batch size is that of training.
    pub momentum: f64,
    /// Weight decay during the continuation; training's when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub weight_decay: Option<f64>,
    pub trials: usize,
    pub mode: SamplingMode,
    pub batch_a: usize,
    pub batch_b: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub inner_iters: Option<usize>,
    pub eps_zero: f64,
    pub side: UnconditionalSide,
    pub class_signal: ClassSignal,
    /// Also write every matrix as CSV.
    pub write_csv: bool,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        SamplingConfig {
            learning_rate: 0.001,
            momentum: 0.0,
            weight_decay: None,
            trials: 30,
            mode: SamplingMode::Dense,
            batch_a: 64,
            batch_b: 64,
            inner_iters: None,
            eps_zero: DEFAULT_EPS_ZERO,
            side: UnconditionalSide::Test,
            class_signal: ClassSignal::ClassLoss,
            write_csv: true,
        }
    }
}

/// Group extraction over the union of the two compact sets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GroupsConfig {
    pub enabled: bool,
    pub threshold: f64,
    pub min_support: u64,
}

impl Default for GroupsConfig {
    fn default() -> Self {
        GroupsConfig {
            enabled: true,
            threshold: 1.0,
            min_support: 20,
        }
    }
}

// Discriminators of the derived seeds.
const SEED_SPLIT: u64 = 1;
const SEED_INIT: u64 = 2;
const SEED_BATCHES: u64 = 3;
const SEED_SAMPLING: u64 = 4;
const SEED_DRAWS: u64 = 5;
const SEED_SUBSET: u64 = 6;

/// The seeds actually used, recorded in the manifest.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Seeds {
    pub master: u64,
    pub subset: u64,
    pub split: u64,
    pub init: u64,
    pub batches: u64,
    pub sampling: u64,
    pub batch_draws: u64,
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| CliError::config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::parse(&text).map_err(|e| match e {
            CliError::Config(m) => CliError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Checks everything that can be checked without touching the data.
    pub fn validate(&self) -> Result<()> {
        match &self.data {
            DataConfig::Cifar10 {
                train_subset,
                test_subset,
                ..
            } => {
                if *train_subset == Some(0) || *test_subset == Some(0) {
                    return Err(CliError::config("subset sizes must be positive"));
                }
            }
            DataConfig::Synthetic {
                classes,
                dim,
                train_per_class,
                test_per_class,
                separation,
                ..
            } => {
                if *classes < 2 || *dim == 0 || *train_per_class == 0 || *test_per_class == 0 {
                    return Err(CliError::config(
                        "synthetic data needs classes >= 2 and positive dim and per-class counts",
                    ));
                }
                if !(separation.is_finite() && *separation > 0.0) {
                    return Err(CliError::config("synthetic separation must be positive"));
                }
            }
        }
        if self.split.compact_size == 0 {
            return Err(CliError::config("compact_size must be positive"));
        }
        self.optim()
            .validate()
            .map_err(|e| CliError::config(format!("training: {e}")))?;
        if self.training.epochs == 0 {
            return Err(CliError::config("training: epochs must be positive"));
        }
        let s = &self.sampling;
        if !(s.learning_rate.is_finite() && s.learning_rate > 0.0) {
            return Err(CliError::config("sampling: learning_rate must be positive"));
        }
        if !(0.0..1.0).contains(&s.momentum) {
            return Err(CliError::config("sampling: momentum must be in [0,1)"));
        }
        if let Some(wd) = s.weight_decay {
            if !(wd.is_finite() && wd >= 0.0) {
                return Err(CliError::config("sampling: weight_decay must be non-negative"));
            }
        }
        let compact = self.split.compact_size;
        self.sampler()
            .validate(compact, compact)
            .map_err(|e| CliError::config(format!("sampling: {e}")))?;
        let g = &self.groups;
        if !(0.0..=1.0).contains(&g.threshold) {
            return Err(CliError::config("groups: threshold must lie in [0,1]"));
        }
        if let ModelConfig::Mlp { hidden } = &self.model {
            if hidden.is_empty() || hidden.contains(&0) {
                return Err(CliError::config(
                    "model: mlp hidden widths must be non-empty and positive",
                ));
            }
        }
        Ok(())
    }

    pub fn seeds(&self) -> Seeds {
        let d = |tag| derive_seed(self.seed, &[tag]);
        Seeds {
            master: self.seed,
            subset: d(SEED_SUBSET),
            split: d(SEED_SPLIT),
            init: d(SEED_INIT),
            batches: d(SEED_BATCHES),
            sampling: d(SEED_SAMPLING),
            batch_draws: d(SEED_DRAWS),
        }
    }

    pub fn optim(&self) -> OptimConfig {
        let t = &self.training;
        OptimConfig {
            learning_rate: t.learning_rate,
            momentum: t.momentum,
            weight_decay: t.weight_decay,
            batch_size: t.batch_size,
            epochs: t.epochs,
            seed: self.seeds().batches,
        }
    }

    pub fn sampler(&self) -> SamplerConfig {
        let s = &self.sampling;
        SamplerConfig {
            trials: s.trials,
            mode: s.mode,
            batch_a: s.batch_a,
            batch_b: s.batch_b,
            inner_iters: s.inner_iters,
            eps_zero: s.eps_zero,
            side: s.side,
            class_signal: s.class_signal,
            seed: self.seeds().batch_draws,
        }
    }

    /// The model for data of `input_dim` features and `classes` classes.
    pub fn model_spec(&self, input_dim: usize, classes: usize) -> Result<ModelSpec> {
        let spec = match &self.model {
            ModelConfig::Linear => ModelSpec::linear(input_dim, classes),
            ModelConfig::Mlp { hidden } => ModelSpec::mlp(input_dim, classes, hidden.clone()),
            ModelConfig::CnnSmall {
                input_shape,
                conv1,
                conv2,
            } => {
                let [c, h, w] = match (input_shape, &self.data) {
                    (Some(shape), _) => *shape,
                    (None, DataConfig::Cifar10 { .. }) => [3, 32, 32],
                    (None, DataConfig::Synthetic { .. }) => {
                        return Err(CliError::config("model: cnn-small on synthetic data needs input_shape"))
                    }
                };
                ModelSpec::cnn_small(c, h, w, *conv1, *conv2, classes)
            }
        };
        spec.validate().map_err(|e| CliError::config(format!("model: {e}")))?;
        Ok(spec)
    }

    /// The CIFAR-10 directory with relative paths taken from `base`.
    pub fn data_dir(&self, base: &Path) -> Option<PathBuf> {
        match &self.data {
            DataConfig::Cifar10 { path, .. } if path.is_relative() => Some(base.join(path)),
            DataConfig::Cifar10 { path, .. } => Some(path.clone()),
            DataConfig::Synthetic { .. } => None,
        }
    }
}
