use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::TrainError;
use crate::data::{make_batches, BatchOrder, QeSample, Vocabs};
use crate::ensemble::{corpus_features, LinearStacker, SystemPrediction};
use crate::models::{load_model, Model, Prediction};
use crate::tags::Stream;

const PREDICT_BATCH: usize = 32;
pub(crate) const STACKED_FILE: &str = "stacked.json";
const STACKED_VERSION: u32 = 1;

/// Accepts either a model directory or a run directory holding `best/`.
pub fn resolve_model_dir(path: &Path) -> PathBuf {
    if path.join("manifest.json").is_file() || path.join(STACKED_FILE).is_file() {
        path.to_path_buf()
    } else {
        path.join("best")
    }
}

/// Runs `model` over `samples` in order and concatenates the outputs.
pub fn predict_samples(model: &Model, vocabs: &Vocabs, samples: &[QeSample]) -> Result<Prediction, TrainError> {
    let mut out = Prediction::default();
    for batch in make_batches(samples, vocabs, PREDICT_BATCH, BatchOrder::Sequential) {
        let p = model.predict(&batch)?;
        out.stream = p.stream;
        out.bad_probs.extend(p.bad_probs);
        if let Some(s) = p.sentence_scores {
            out.sentence_scores.get_or_insert_with(Vec::new).extend(s);
        }
        if let Some(a) = p.argmax {
            out.argmax.get_or_insert_with(Vec::new).extend(a);
        }
    }
    Ok(out)
}

/// On-disk form of a stacked model.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub(crate) struct StackedFile {
    pub format_version: u32,
    /// Model directories of the base systems, in feature order.
    pub systems: Vec<PathBuf>,
    pub stacker: LinearStacker,
    pub threshold: f64,
}

impl StackedFile {
    pub fn new(systems: Vec<PathBuf>, stacker: LinearStacker, threshold: f64) -> Self {
        Self {
            format_version: STACKED_VERSION,
            systems,
            stacker,
            threshold,
        }
    }
}

/// A model ready to predict: a neural model with its vocabularies, or a
/// stacker with its base systems.
#[derive(Debug, Clone)]
pub enum LoadedModel {
    Neural { model: Model, vocabs: Vocabs },
    Stacked { stacker: LinearStacker, systems: Vec<(Model, Vocabs)> },
}

impl LoadedModel {
    pub fn load(path: &Path) -> Result<Self, TrainError> {
        let dir = resolve_model_dir(path);
        let stacked = dir.join(STACKED_FILE);
        if !stacked.is_file() {
            let (model, vocabs) = load_model(&dir)?;
            return Ok(LoadedModel::Neural { model, vocabs });
        }
        let text = std::fs::read_to_string(&stacked).map_err(|e| TrainError::io(&stacked, e))?;
        let file: StackedFile = serde_json::from_str(&text).map_err(|e| TrainError::Format {
            path: stacked.clone(),
            message: e.to_string(),
        })?;
        if file.format_version != STACKED_VERSION {
            return Err(TrainError::Format {
                path: stacked,
                message: format!("format version {} is not supported", file.format_version),
            });
        }
        let systems = file.systems.iter().map(|d| load_model(d)).collect::<Result<_, _>>()?;
        Ok(LoadedModel::Stacked {
            stacker: file.stacker,
            systems,
        })
    }

    /// Stream of word-level outputs, if any.
    pub fn task(&self) -> Option<Stream> {
        match self {
            LoadedModel::Neural { model, .. } => model.spec().task(),
            LoadedModel::Stacked { .. } => Some(Stream::Mt),
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            LoadedModel::Neural { model, .. } => model.spec().kind(),
            LoadedModel::Stacked { .. } => "stacked",
        }
    }

    /// BAD probabilities (and sentence scores where the model has them) for
    /// every sample. Out-of-vocabulary words map to the unknown symbol.
    pub fn predict(&self, samples: &[QeSample], system_id: &str) -> Result<SystemPrediction, TrainError> {
        if samples.is_empty() {
            return Err(TrainError::EmptyInput);
        }
        let mut out = SystemPrediction::new(system_id);
        match self {
            LoadedModel::Neural { model, vocabs } => {
                let stream = model.spec().task().ok_or(TrainError::NoTagOutput(model.spec().kind()))?;
                let p = predict_samples(model, vocabs, samples)?;
                out.streams.insert(stream, p.bad_probs);
                out.sentence_scores = p.sentence_scores;
            }
            LoadedModel::Stacked { stacker, systems } => {
                let mut base = Vec::with_capacity(systems.len());
                for (i, (model, vocabs)) in systems.iter().enumerate() {
                    if model.spec().task() != Some(Stream::Mt) {
                        return Err(TrainError::TaskMismatch {
                            expected: Stream::Mt,
                            found: model.spec().task(),
                        });
                    }
                    let p = predict_samples(model, vocabs, samples)?;
                    base.push(SystemPrediction::new(&i.to_string()).with_stream(Stream::Mt, p.bad_probs));
                }
                let feats = corpus_features(samples, &base, &stacker.templates)?;
                let probs = feats
                    .iter()
                    .map(|sent| sent.iter().map(|f| stacker.bad_probability(f)).collect())
                    .collect();
                out.streams.insert(Stream::Mt, probs);
            }
        }
        Ok(out)
    }
}

/// Loads the model at `path` and predicts `samples`. With `expected` set,
/// the model must label that stream.
pub fn predict(path: &Path, samples: &[QeSample], expected: Option<Stream>) -> Result<SystemPrediction, TrainError> {
    let model = LoadedModel::load(path)?;
    if let Some(e) = expected {
        if model.task() != Some(e) {
            return Err(TrainError::TaskMismatch {
                expected: e,
                found: model.task(),
            });
        }
    }
    let id = path.display().to_string();
    model.predict(samples, &id)
}
