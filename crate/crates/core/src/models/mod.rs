//! Quality estimation architectures.
//!
//! * [`QuetchModel`]: window MLP over target and aligned source words.
//! * [`NuqeModel`]: windows, feed-forward layers and a bidirectional GRU.
//! * [`PredictorModel`]: attention LSTM that predicts each target word from
//!   the source and the surrounding target words.
//! * [`EstimatorModel`]: word and sentence predictions from predictor
//!   features.
//!
//! [`Model`] wraps all four behind one interface used by the trainer, and
//! [`save_model`]/[`load_model`] persist them together with their
//! vocabularies.

mod layers;
mod nuqe;
mod predictor;
mod quetch;
mod saved;
mod windows;
mod word;

pub use layers::{BiGru, BiLstm, Embedding, Gru, Linear, Lstm};
pub use nuqe::{NuqeConfig, NuqeModel};
pub use predictor::{
    source_labels_via_reverse, Direction, EstimatorConfig, EstimatorModel, EstimatorOutputs, Predictor,
    PredictorConfig, PredictorModel, PredictorOutputs, PREDICTOR_PREFIX,
};
pub use quetch::{QuetchConfig, QuetchModel};
pub use saved::{load_model, read_manifest, save_model, Manifest, VocabInfo, MODEL_FORMAT_VERSION};
pub use windows::{main_width, word_windows, WindowInputs};
pub use word::{word_distributions, word_loss, WordTagger};

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{Batch, DataError, Vocabs};
use crate::numerics::{Graph, NodeId, NumericsError, ParamStore};
use crate::tags::Stream;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("window size must be odd and at least 1, got {0}")]
    InvalidWindow(usize),
    #[error("batch has no gold {} tags", .0.as_str())]
    MissingGold(Stream),
    #[error("batch has no gold HTER scores but the sentence loss weight is non-zero")]
    MissingHter,
    #[error("model produced {found} positions for {expected} gold tags")]
    LengthMismatch { expected: usize, found: usize },
    #[error("estimator got {features} feature rows for {tokens} tokens")]
    FeatureLength { features: usize, tokens: usize },
    #[error("predictor direction {found:?} does not match the required {expected:?}")]
    DirectionMismatch { expected: Direction, found: Direction },
    #[error("model {dir}: {message}")]
    Manifest { dir: PathBuf, message: String },
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error(transparent)]
    Data(#[from] DataError),
}

/// Architecture and hyper-parameters. Serialized with a `kind` tag in run
/// configurations and model manifests.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ModelSpec {
    Quetch(QuetchConfig),
    Nuqe(NuqeConfig),
    Predictor(PredictorConfig),
    Estimator(EstimatorConfig),
}

impl ModelSpec {
    pub fn kind(&self) -> &'static str {
        match self {
            ModelSpec::Quetch(_) => "quetch",
            ModelSpec::Nuqe(_) => "nuqe",
            ModelSpec::Predictor(_) => "predictor",
            ModelSpec::Estimator(_) => "estimator",
        }
    }

    /// Tag stream the model labels; `None` for the predictor.
    pub fn task(&self) -> Option<Stream> {
        match self {
            ModelSpec::Quetch(c) => Some(c.task),
            ModelSpec::Nuqe(c) => Some(c.task),
            ModelSpec::Predictor(_) => None,
            ModelSpec::Estimator(c) => Some(c.predictor.direction.stream()),
        }
    }

    /// Recurrent models are trained with gradient clipping.
    pub fn is_recurrent(&self) -> bool {
        !matches!(self, ModelSpec::Quetch(_))
    }
}

#[derive(Debug, Clone)]
pub enum Model {
    Quetch(QuetchModel),
    Nuqe(NuqeModel),
    Predictor(PredictorModel),
    Estimator(EstimatorModel),
}

/// Model outputs for one batch.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Prediction {
    /// Stream the BAD probabilities belong to.
    pub stream: Option<Stream>,
    /// Per sentence, P(BAD) for each position of `stream`.
    pub bad_probs: Vec<Vec<f64>>,
    pub sentence_scores: Option<Vec<f64>>,
    /// Predictor only: most probable target id at each position.
    pub argmax: Option<Vec<Vec<usize>>>,
}

impl Model {
    /// Fresh model with seeded initialization.
    pub fn build(spec: &ModelSpec, vocabs: &Vocabs, seed: u64) -> Result<Self, ModelError> {
        let (s, t) = (vocabs.source.len(), vocabs.target.len());
        Ok(match spec {
            ModelSpec::Quetch(c) => Model::Quetch(QuetchModel::new(c.clone(), s, t, seed)?),
            ModelSpec::Nuqe(c) => Model::Nuqe(NuqeModel::new(c.clone(), s, t, seed)?),
            ModelSpec::Predictor(c) => {
                let (ps, pt) = match c.direction {
                    Direction::Forward => (s, t),
                    Direction::Reverse => (t, s),
                };
                Model::Predictor(PredictorModel::new(c.clone(), ps, pt, seed))
            }
            ModelSpec::Estimator(c) => Model::Estimator(EstimatorModel::new(c.clone(), s, t, seed)),
        })
    }

    pub fn spec(&self) -> ModelSpec {
        match self {
            Model::Quetch(m) => ModelSpec::Quetch(m.config.clone()),
            Model::Nuqe(m) => ModelSpec::Nuqe(m.config.clone()),
            Model::Predictor(m) => ModelSpec::Predictor(m.arch.config.clone()),
            Model::Estimator(m) => ModelSpec::Estimator(m.config.clone()),
        }
    }

    pub fn store(&self) -> &ParamStore {
        match self {
            Model::Quetch(m) => m.store(),
            Model::Nuqe(m) => m.store(),
            Model::Predictor(m) => m.store(),
            Model::Estimator(m) => m.store(),
        }
    }

    pub fn store_mut(&mut self) -> &mut ParamStore {
        match self {
            Model::Quetch(m) => m.store_mut(),
            Model::Nuqe(m) => m.store_mut(),
            Model::Predictor(m) => m.store_mut(),
            Model::Estimator(m) => m.store_mut(),
        }
    }

    /// Mean training loss over the batch and the number of positions that
    /// contributed. `bad_weight` scales BAD positions of tagging losses.
    pub fn loss(&self, g: &mut Graph<'_>, batch: &Batch, bad_weight: f64) -> Result<(NodeId, usize), ModelError> {
        match self {
            Model::Quetch(m) => word_loss(m, g, batch, bad_weight),
            Model::Nuqe(m) => word_loss(m, g, batch, bad_weight),
            Model::Predictor(m) => Ok(m.loss(g, batch)),
            Model::Estimator(m) => m.loss(g, batch, bad_weight),
        }
    }

    pub fn predict(&self, batch: &Batch) -> Result<Prediction, ModelError> {
        let bad = |d: Vec<Vec<[f64; 2]>>| d.into_iter().map(|s| s.iter().map(|p| p[1]).collect()).collect();
        Ok(match self {
            Model::Quetch(m) => Prediction {
                stream: Some(m.task()),
                bad_probs: bad(word_distributions(m, batch)?),
                ..Default::default()
            },
            Model::Nuqe(m) => Prediction {
                stream: Some(m.task()),
                bad_probs: bad(word_distributions(m, batch)?),
                ..Default::default()
            },
            Model::Predictor(m) => Prediction {
                argmax: Some(m.argmax(batch)),
                ..Default::default()
            },
            Model::Estimator(m) => {
                let (tokens, sentences) = m.predict(batch)?;
                Prediction {
                    stream: Some(m.task()),
                    bad_probs: bad(tokens),
                    sentence_scores: Some(sentences),
                    argmax: None,
                }
            }
        })
    }
}
