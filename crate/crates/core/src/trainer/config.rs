use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::{CorpusFiles, DEFAULT_MAX_LEN};
use crate::ensemble::Template;
use crate::models::{EstimatorConfig, ModelSpec, NuqeConfig, PredictorConfig, QuetchConfig};
use crate::numerics::OptimizerKind;

/// Everything `kiwi train` reads from its configuration file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    #[serde(default)]
    pub seed: u64,
    pub output_dir: PathBuf,
    pub data: DataConfig,
    pub model: ModelConfig,
    #[serde(default)]
    pub training: TrainingConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    pub train: CorpusFiles,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub valid: Option<CorpusFiles>,
    #[serde(default = "one")]
    pub vocab_min_freq: usize,
    #[serde(default = "default_max_len")]
    pub max_len: usize,
}

fn one() -> usize {
    1
}
fn default_max_len() -> usize {
    DEFAULT_MAX_LEN
}

/// A neural architecture or the stacked linear model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ModelConfig {
    Quetch(QuetchConfig),
    Nuqe(NuqeConfig),
    Predictor(PredictorConfig),
    Estimator(EstimatorConfig),
    Stacked(StackedConfig),
}

impl ModelConfig {
    pub fn neural(&self) -> Option<ModelSpec> {
        Some(match self {
            ModelConfig::Quetch(c) => ModelSpec::Quetch(c.clone()),
            ModelConfig::Nuqe(c) => ModelSpec::Nuqe(c.clone()),
            ModelConfig::Predictor(c) => ModelSpec::Predictor(c.clone()),
            ModelConfig::Estimator(c) => ModelSpec::Estimator(c.clone()),
            ModelConfig::Stacked(_) => return None,
        })
    }
}

/// Linear model over base-system MT predictions. Each system is a run
/// directory trained with `jackknife_folds`, so that it holds held-out
/// training predictions next to its validation predictions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StackedConfig {
    pub systems: Vec<PathBuf>,
    #[serde(default = "default_l2")]
    pub l2: f64,
    #[serde(default = "default_templates")]
    pub templates: Vec<Template>,
}

fn default_l2() -> f64 {
    1e-2
}
fn default_templates() -> Vec<Template> {
    Template::ALL.to_vec()
}

/// Validation metric that picks the best epoch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SelectionMetric {
    /// f1_mult for tagging models, pearson for sentence-only models,
    /// accuracy for the predictor.
    #[default]
    Auto,
    F1Mult,
    Pearson,
    Accuracy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingConfig {
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default)]
    pub optimizer: OptimizerKind,
    #[serde(default = "default_lr")]
    pub learning_rate: f64,
    /// Loss weight of BAD positions.
    #[serde(default = "default_bad_weight")]
    pub bad_weight: f64,
    /// Gradient norm cap; recurrent models default to 5.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub clip_norm: Option<f64>,
    /// Stop after this many epochs without improvement; 0 disables.
    #[serde(default = "default_patience")]
    pub patience: usize,
    /// Save `checkpoints/epoch_<k>` every this many epochs; 0 disables.
    #[serde(default)]
    pub checkpoint_every: usize,
    #[serde(default)]
    pub selection_metric: SelectionMetric,
    /// When at least 2, also write held-out training predictions from
    /// models trained on the other folds.
    #[serde(default)]
    pub jackknife_folds: usize,
    #[serde(default = "default_threshold")]
    pub threshold: f64,
}

fn default_epochs() -> usize {
    10
}
fn default_batch() -> usize {
    32
}
fn default_lr() -> f64 {
    1e-3
}
fn default_bad_weight() -> f64 {
    3.0
}
fn default_patience() -> usize {
    10
}
fn default_threshold() -> f64 {
    0.5
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            epochs: default_epochs(),
            batch_size: default_batch(),
            optimizer: OptimizerKind::default(),
            learning_rate: default_lr(),
            bad_weight: default_bad_weight(),
            clip_norm: None,
            patience: default_patience(),
            checkpoint_every: 0,
            selection_metric: SelectionMetric::Auto,
            jackknife_folds: 0,
            threshold: default_threshold(),
        }
    }
}

fn resolve(p: &mut PathBuf, base: &Path) {
    if p.is_relative() {
        *p = base.join(&*p);
    }
}

impl TrainConfig {
    /// Makes every relative path relative to `base` (the config file's
    /// directory).
    pub fn resolve_paths(&mut self, base: &Path) {
        resolve(&mut self.output_dir, base);
        self.data.train.resolve(base);
        if let Some(v) = &mut self.data.valid {
            v.resolve(base);
        }
        match &mut self.model {
            ModelConfig::Estimator(c) => {
                if let Some(p) = &mut c.predictor_checkpoint {
                    resolve(p, base);
                }
            }
            ModelConfig::Stacked(c) => c.systems.iter_mut().for_each(|p| resolve(p, base)),
            _ => {}
        }
    }
}
