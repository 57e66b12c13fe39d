//! Training runs: epochs over shuffled minibatches, validation after every
//! epoch, best-model retention, early stopping and prediction dumps.
//!
//! A run directory holds
//!
//! ```text
//! config.snapshot          resolved configuration (YAML)
//! history.jsonl            one JSON record per finished epoch
//! checkpoints/epoch_<k>/   periodic snapshots (model directories)
//! best/                    model with the best validation score
//! predictions/val.<stream>.probs, val.sentence.scores
//! predictions/train.<stream>.probs   held-out predictions (jackknife)
//! run.json                 the final run record
//! ```
//!
//! While a run is active the directory holds a `.lock` file.

mod config;
mod predict;

pub use config::{DataConfig, ModelConfig, SelectionMetric, StackedConfig, TrainConfig, TrainingConfig};
pub use predict::{predict, predict_samples, resolve_model_dir, LoadedModel};

use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::data::{load_corpus, make_batches, write_scores, BatchOrder, DataError, QeSample, Vocabs};
use crate::ensemble::{
    corpus_features, jackknife_folds, read_probabilities, write_probabilities, EnsembleError, Features, LinearStacker,
    StackerOptions, SystemPrediction,
};
use crate::metrics::{accuracy, f1_mult_corpus, pearson, spearman, MetricError};
use crate::models::{load_model, save_model, EstimatorModel, Model, ModelError, ModelSpec, Prediction};
use crate::numerics::{Graph, NumericsError, Optimizer};
use crate::tags::{Stream, Tag};
use predict::{StackedFile, STACKED_FILE};

/// Recurrent models clip gradients to this norm unless configured.
pub const DEFAULT_CLIP_NORM: f64 = 5.0;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
    #[error("output directory {0} is not empty")]
    NotEmpty(PathBuf),
    #[error("run directory {0} is locked by another run")]
    Locked(PathBuf),
    #[error("non-finite loss at epoch {epoch}, step {step}")]
    NonFiniteLoss { epoch: usize, step: usize },
    #[error("no samples to predict")]
    EmptyInput,
    #[error("training data is empty")]
    EmptyTraining,
    #[error("{0} models have no tag outputs")]
    NoTagOutput(&'static str),
    #[error("model labels {} but {} was required", .found.map_or("nothing", |s| s.as_str()), .expected.as_str())]
    TaskMismatch { expected: Stream, found: Option<Stream> },
    #[error("selection metric {metric:?} is not available for {kind} models")]
    Selection { metric: SelectionMetric, kind: &'static str },
    #[error("{0}")]
    Config(String),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error(transparent)]
    Ensemble(#[from] EnsembleError),
    #[error(transparent)]
    Metric(#[from] MetricError),
}

impl TrainError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        TrainError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

/// Metrics of one finished epoch. Undefined metrics are `null`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub metrics: BTreeMap<String, Option<f64>>,
    pub selection: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub run_id: String,
    pub run_dir: PathBuf,
    pub seed: u64,
    pub config: TrainConfig,
    pub selection_metric: String,
    pub history: Vec<EpochRecord>,
    pub checkpoints: Vec<PathBuf>,
    pub best_checkpoint: PathBuf,
    /// `None` when the initial model was kept (no epochs run).
    pub best_epoch: Option<usize>,
}

impl RunRecord {
    pub fn load(run_dir: &Path) -> Result<Self, TrainError> {
        let path = run_dir.join("run.json");
        let text = std::fs::read_to_string(&path).map_err(|e| TrainError::io(&path, e))?;
        serde_json::from_str(&text).map_err(|e| TrainError::Format {
            path,
            message: e.to_string(),
        })
    }
}

/// Removes the lockfile when the run ends, successfully or not.
struct RunLock(PathBuf);

impl RunLock {
    fn acquire(dir: &Path) -> Result<Self, TrainError> {
        let path = dir.join(".lock");
        match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(mut f) => {
                let _ = writeln!(f, "{}", std::process::id());
                Ok(RunLock(path))
            }
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => Err(TrainError::Locked(dir.to_path_buf())),
            Err(e) => Err(TrainError::io(&path, e)),
        }
    }
}

impl Drop for RunLock {
    fn drop(&mut self) {
        let _ = std::fs::remove_file(&self.0);
    }
}

fn create_dir(path: &Path) -> Result<(), TrainError> {
    std::fs::create_dir_all(path).map_err(|e| TrainError::io(path, e))
}

fn write_file(path: &Path, text: &str) -> Result<(), TrainError> {
    std::fs::write(path, text).map_err(|e| TrainError::io(path, e))
}

/// Deterministic id from the resolved configuration.
pub fn run_id(config: &TrainConfig) -> String {
    let mut c = config.clone();
    c.output_dir = PathBuf::new();
    let text = serde_yaml::to_string(&c).expect("config serializes");
    let digest = Sha256::digest(text.as_bytes());
    digest[..8].iter().map(|b| format!("{b:02x}")).collect()
}

/// Validation metrics of a prediction against gold samples.
pub fn evaluate_prediction(
    pred: &Prediction,
    samples: &[QeSample],
    threshold: f64,
) -> Result<BTreeMap<String, Option<f64>>, TrainError> {
    let mut m = BTreeMap::new();
    if let Some(stream) = pred.stream {
        let gold = samples
            .iter()
            .map(|s| match stream {
                Stream::Mt => s.mt_tags.clone(),
                Stream::Gap => s.gap_tags.clone(),
                Stream::Source => s.source_tags.clone(),
            })
            .collect::<Option<Vec<_>>>();
        if let Some(gold) = gold {
            let tags: Vec<Vec<Tag>> = pred
                .bad_probs
                .iter()
                .map(|r| r.iter().map(|&p| Tag::from_bad_prob(p, threshold)).collect())
                .collect();
            let r = f1_mult_corpus(&gold, &tags)?;
            let s = stream.as_str();
            m.insert(format!("{s}_f1_ok"), Some(r.f1_ok));
            m.insert(format!("{s}_f1_bad"), Some(r.f1_bad));
            m.insert(format!("{s}_f1_mult"), Some(r.f1_mult));
        }
    }
    if let Some(scores) = &pred.sentence_scores {
        if let Some(gold) = samples.iter().map(|s| s.hter).collect::<Option<Vec<f64>>>() {
            m.insert("pearson".into(), pearson(&gold, scores).ok());
            m.insert("spearman".into(), spearman(&gold, scores).ok());
        }
    }
    Ok(m)
}

/// Per-token accuracy of a predictor on `samples`.
pub fn predictor_accuracy(model: &Model, vocabs: &Vocabs, samples: &[QeSample]) -> Result<f64, TrainError> {
    let Model::Predictor(p) = model else {
        return Err(TrainError::Config("accuracy needs a predictor model".into()));
    };
    let mut gold = Vec::new();
    let mut got = Vec::new();
    for batch in make_batches(samples, vocabs, 32, BatchOrder::Sequential) {
        let am = p.argmax(&batch);
        for (row, ids) in am.into_iter().enumerate() {
            let (_, tgt) = p.arch.sides(&batch, row);
            gold.extend_from_slice(tgt);
            got.extend(ids);
        }
    }
    if gold.is_empty() {
        return Ok(0.0);
    }
    Ok(accuracy(&gold, &got)?)
}

fn metrics_for(model: &Model, vocabs: &Vocabs, samples: &[QeSample], threshold: f64) -> Result<(Prediction, BTreeMap<String, Option<f64>>), TrainError> {
    if let Model::Predictor(_) = model {
        let mut m = BTreeMap::new();
        m.insert("accuracy".to_string(), Some(predictor_accuracy(model, vocabs, samples)?));
        return Ok((Prediction::default(), m));
    }
    let pred = predict_samples(model, vocabs, samples)?;
    let m = evaluate_prediction(&pred, samples, threshold)?;
    Ok((pred, m))
}

fn selection_key(metric: SelectionMetric, spec: &ModelSpec, samples: &[QeSample]) -> Result<String, TrainError> {
    let has_tags = |s: Stream| {
        samples.iter().all(|x| match s {
            Stream::Mt => x.mt_tags.is_some(),
            Stream::Gap => x.gap_tags.is_some(),
            Stream::Source => x.source_tags.is_some(),
        })
    };
    let err = || TrainError::Selection {
        metric,
        kind: spec.kind(),
    };
    Ok(match (metric, spec) {
        (SelectionMetric::Auto | SelectionMetric::Accuracy, ModelSpec::Predictor(_)) => "accuracy".into(),
        (SelectionMetric::Accuracy, _) => return Err(err()),
        (_, ModelSpec::Predictor(_)) => return Err(err()),
        (SelectionMetric::Pearson, ModelSpec::Estimator(_)) => "pearson".into(),
        (SelectionMetric::Pearson, _) => return Err(err()),
        (SelectionMetric::Auto, ModelSpec::Estimator(c)) if !has_tags(c.predictor.direction.stream()) => "pearson".into(),
        (_, spec) => format!("{}_f1_mult", spec.task().expect("tagging model").as_str()),
    })
}

/// Mean training loss of one epoch, weighted by positions per batch.
fn run_epoch(
    model: &mut Model,
    opt: &mut Optimizer,
    samples: &[QeSample],
    vocabs: &Vocabs,
    tc: &TrainingConfig,
    clip: Option<f64>,
    seed: u64,
    epoch: usize,
) -> Result<f64, TrainError> {
    let order = BatchOrder::Shuffled {
        seed,
        epoch: epoch as u64,
    };
    let mut total = 0.0;
    let mut count = 0usize;
    for (step, batch) in make_batches(samples, vocabs, tc.batch_size, order).iter().enumerate() {
        let (value, n, grads) = {
            let mut g = Graph::new(model.store()).with_finite_check(true);
            let (loss, n) = model.loss(&mut g, batch, tc.bad_weight)?;
            let value = g.scalar(loss);
            if !value.is_finite() || g.check().is_err() {
                return Err(TrainError::NonFiniteLoss { epoch, step: step + 1 });
            }
            (value, n, g.backward(loss)?)
        };
        if n == 0 {
            continue;
        }
        let store = model.store_mut();
        store.apply_grads(grads);
        if let Some(c) = clip {
            store.clip_grad_norm(c);
        }
        opt.step(store)?;
        total += value * n as f64;
        count += n;
    }
    Ok(if count == 0 { 0.0 } else { total / count as f64 })
}

fn better(candidate: Option<f64>, best: Option<f64>) -> bool {
    match (candidate, best) {
        (Some(c), Some(b)) => c > b,
        (Some(_), None) => true,
        (None, _) => false,
    }
}

fn load_samples(files: &crate::data::CorpusFiles, max_len: usize) -> Result<Vec<QeSample>, TrainError> {
    Ok(load_corpus(files, max_len)?)
}

/// Builds the initial model and its vocabularies. An estimator with a
/// pretrained predictor reuses that predictor's vocabularies.
fn initial_model(spec: &ModelSpec, train: &[QeSample], min_freq: usize, seed: u64) -> Result<(Model, Vocabs), TrainError> {
    if let ModelSpec::Estimator(cfg) = spec {
        if let Some(path) = &cfg.predictor_checkpoint {
            let (pred, vocabs) = load_model(&resolve_model_dir(path))?;
            let Model::Predictor(pred) = pred else {
                return Err(TrainError::Config(format!(
                    "{} does not hold a predictor model",
                    path.display()
                )));
            };
            let est = EstimatorModel::from_predictor(&pred, cfg.clone(), seed)?;
            return Ok((Model::Estimator(est), vocabs));
        }
    }
    let vocabs = Vocabs::build(train, min_freq);
    Ok((Model::build(spec, &vocabs, seed)?, vocabs))
}

fn write_prediction_files(dir: &Path, split: &str, pred: &Prediction) -> Result<(), TrainError> {
    if let Some(stream) = pred.stream {
        write_probabilities(&dir.join(format!("{split}.{}.probs", stream.as_str())), &pred.bad_probs)?;
    }
    if let Some(s) = &pred.sentence_scores {
        write_scores(&dir.join(format!("{split}.sentence.scores")), s)?;
    }
    Ok(())
}

/// Prepares an empty run directory and writes the config snapshot.
fn open_run_dir(config: &TrainConfig) -> Result<(RunLock, String), TrainError> {
    let dir = &config.output_dir;
    if dir.exists() {
        let mut entries = std::fs::read_dir(dir).map_err(|e| TrainError::io(dir, e))?;
        if entries.next().is_some() {
            return Err(TrainError::NotEmpty(dir.clone()));
        }
    }
    create_dir(dir)?;
    let lock = RunLock::acquire(dir)?;
    let snapshot = serde_yaml::to_string(config).expect("config serializes");
    write_file(&dir.join("config.snapshot"), &snapshot)?;
    Ok((lock, run_id(config)))
}

/// Trains the configured model and returns the run record, which is also
/// written to `run.json`.
pub fn train(config: &TrainConfig) -> Result<RunRecord, TrainError> {
    let (_lock, run_id) = open_run_dir(config)?;
    let dir = config.output_dir.clone();
    log::info!("run {run_id} in {}", dir.display());
    let record = match &config.model {
        ModelConfig::Stacked(sc) => train_stacked(config, sc, run_id)?,
        _ => train_neural(config, run_id)?,
    };
    let json = serde_json::to_string_pretty(&record).expect("record serializes");
    write_file(&dir.join("run.json"), &(json + "\n"))?;
    Ok(record)
}

fn train_neural(config: &TrainConfig, run_id: String) -> Result<RunRecord, TrainError> {
    let spec = config.model.neural().expect("neural model");
    let tc = &config.training;
    let dir = &config.output_dir;
    let train = load_samples(&config.data.train, config.data.max_len)?;
    if train.is_empty() {
        return Err(TrainError::EmptyTraining);
    }
    let valid = match &config.data.valid {
        Some(v) => load_samples(v, config.data.max_len)?,
        None => {
            log::info!("no validation data; selecting on the training data");
            train.clone()
        }
    };
    let key = selection_key(tc.selection_metric, &spec, &valid)?;
    let (mut model, vocabs) = initial_model(&spec, &train, config.data.vocab_min_freq, config.seed)?;
    let clip = tc.clip_norm.or(spec.is_recurrent().then_some(DEFAULT_CLIP_NORM));
    let mut opt = Optimizer::new(tc.optimizer, tc.learning_rate);
    let shuffle_seed = config.seed.wrapping_add(1);

    let best_dir = dir.join("best");
    let history_path = dir.join("history.jsonl");
    let mut history_file = File::create(&history_path).map_err(|e| TrainError::io(&history_path, e))?;
    let mut history = Vec::new();
    let mut checkpoints = Vec::new();
    let mut best: Option<(Option<f64>, usize)> = None;
    save_model(&best_dir, &model, &vocabs)?;

    for epoch in 1..=tc.epochs {
        let train_loss = run_epoch(&mut model, &mut opt, &train, &vocabs, tc, clip, shuffle_seed, epoch)?;
        let (_, metrics) = metrics_for(&model, &vocabs, &valid, tc.threshold)?;
        let selection = metrics.get(&key).copied().flatten();
        let rec = EpochRecord {
            epoch,
            train_loss,
            metrics,
            selection,
        };
        let line = serde_json::to_string(&rec).expect("record serializes");
        writeln!(history_file, "{line}").map_err(|e| TrainError::io(&history_path, e))?;
        log::info!("epoch {epoch}: loss {train_loss:.6} {key} {selection:?}");
        history.push(rec);

        if tc.checkpoint_every > 0 && epoch % tc.checkpoint_every == 0 {
            let path = dir.join("checkpoints").join(format!("epoch_{epoch}"));
            save_model(&path, &model, &vocabs)?;
            checkpoints.push(path);
        }
        if best.is_none() || better(selection, best.and_then(|b| b.0)) {
            best = Some((selection, epoch));
            save_model(&best_dir, &model, &vocabs)?;
        }
        let best_epoch = best.map_or(0, |b| b.1);
        if tc.patience > 0 && epoch - best_epoch >= tc.patience {
            log::info!("no improvement for {} epochs; stopping", tc.patience);
            break;
        }
    }

    let (best_model, _) = load_model(&best_dir)?;
    let pred_dir = dir.join("predictions");
    create_dir(&pred_dir)?;
    if !matches!(best_model, Model::Predictor(_)) {
        let pred = predict_samples(&best_model, &vocabs, &valid)?;
        write_prediction_files(&pred_dir, "val", &pred)?;
    }
    let best_epoch = best.map(|b| b.1);
    if tc.jackknife_folds >= 2 {
        jackknife(config, &spec, &train, &vocabs, best_epoch.unwrap_or(0), &pred_dir)?;
    }

    Ok(RunRecord {
        run_id,
        run_dir: dir.clone(),
        seed: config.seed,
        config: config.clone(),
        selection_metric: key,
        history,
        checkpoints,
        best_checkpoint: best_dir,
        best_epoch,
    })
}

/// Held-out predictions for every training sample: each fold is predicted
/// by a model trained on the other folds for `epochs` epochs.
fn jackknife(
    config: &TrainConfig,
    spec: &ModelSpec,
    train: &[QeSample],
    vocabs: &Vocabs,
    epochs: usize,
    pred_dir: &Path,
) -> Result<(), TrainError> {
    if matches!(spec, ModelSpec::Predictor(_)) {
        return Err(TrainError::NoTagOutput("predictor"));
    }
    let tc = &config.training;
    let clip = tc.clip_norm.or(spec.is_recurrent().then_some(DEFAULT_CLIP_NORM));
    let folds = jackknife_folds(train.len(), tc.jackknife_folds);
    let mut merged = Prediction::default();
    for (f, held) in folds.iter().enumerate() {
        log::info!("jackknife fold {}/{}", f + 1, folds.len());
        let rest: Vec<QeSample> = (0..train.len())
            .filter(|i| !held.contains(i))
            .map(|i| train[i].clone())
            .collect();
        let held_samples: Vec<QeSample> = held.iter().map(|&i| train[i].clone()).collect();
        let seed = config.seed.wrapping_add(100 + f as u64);
        // fold models share the full-run vocabularies so ids line up
        let mut model = match spec {
            ModelSpec::Estimator(c) if c.predictor_checkpoint.is_some() => initial_model(spec, &rest, 1, seed)?.0,
            _ => Model::build(spec, vocabs, seed)?,
        };
        let mut opt = Optimizer::new(tc.optimizer, tc.learning_rate);
        for epoch in 1..=epochs {
            run_epoch(&mut model, &mut opt, &rest, vocabs, tc, clip, seed.wrapping_add(1), epoch)?;
        }
        let p = predict_samples(&model, vocabs, &held_samples)?;
        merged.stream = p.stream;
        merged.bad_probs.extend(p.bad_probs);
        if let Some(s) = p.sentence_scores {
            merged.sentence_scores.get_or_insert_with(Vec::new).extend(s);
        }
    }
    write_prediction_files(pred_dir, "train", &merged)
}

fn system_probs(run: &Path, split: &str, samples: &[QeSample]) -> Result<SystemPrediction, TrainError> {
    let path = run.join("predictions").join(format!("{split}.mt.probs"));
    let probs = read_probabilities(&path)?;
    if probs.len() != samples.len() || probs.iter().zip(samples).any(|(p, s)| p.len() != s.mt.len()) {
        return Err(TrainError::Format {
            path,
            message: "predictions do not match the configured corpus".into(),
        });
    }
    Ok(SystemPrediction::new(&run.display().to_string()).with_stream(Stream::Mt, probs))
}

fn flat_gold(samples: &[QeSample]) -> Result<Vec<Tag>, TrainError> {
    let mut out = Vec::new();
    for s in samples {
        out.extend(s.mt_tags.as_ref().ok_or(ModelError::MissingGold(Stream::Mt))?);
    }
    Ok(out)
}

fn train_stacked(config: &TrainConfig, sc: &StackedConfig, run_id: String) -> Result<RunRecord, TrainError> {
    if sc.systems.is_empty() {
        return Err(TrainError::Config("stacked model needs at least one system".into()));
    }
    let dir = &config.output_dir;
    let tc = &config.training;
    let train = load_samples(&config.data.train, config.data.max_len)?;
    let valid = match &config.data.valid {
        Some(v) => load_samples(v, config.data.max_len)?,
        None => train.clone(),
    };
    let val_split = if config.data.valid.is_some() { "val" } else { "train" };
    let train_sys: Vec<_> = sc.systems.iter().map(|r| system_probs(r, "train", &train)).collect::<Result<_, _>>()?;
    let val_sys: Vec<_> = sc.systems.iter().map(|r| system_probs(r, val_split, &valid)).collect::<Result<_, _>>()?;

    let feats: Vec<Features> = corpus_features(&train, &train_sys, &sc.templates)?.concat();
    let opts = StackerOptions {
        l2: sc.l2,
        ..Default::default()
    };
    let (stacker, fit) = LinearStacker::train(&feats, &flat_gold(&train)?, &sc.templates, &opts)?;
    log::info!("stacker: {} iterations, objective {:.6}", fit.iterations, fit.objective);

    let val_feats = corpus_features(&valid, &val_sys, &sc.templates)?;
    let probs: Vec<Vec<f64>> = val_feats
        .iter()
        .map(|s| s.iter().map(|f| stacker.bad_probability(f)).collect())
        .collect();
    let pred = Prediction {
        stream: Some(Stream::Mt),
        bad_probs: probs,
        ..Default::default()
    };
    let metrics = evaluate_prediction(&pred, &valid, tc.threshold)?;
    let key = "mt_f1_mult".to_string();
    let rec = EpochRecord {
        epoch: 1,
        train_loss: fit.objective,
        selection: metrics.get(&key).copied().flatten(),
        metrics,
    };
    let line = serde_json::to_string(&rec).expect("record serializes");
    write_file(&dir.join("history.jsonl"), &(line + "\n"))?;

    let best_dir = dir.join("best");
    create_dir(&best_dir)?;
    let systems = sc.systems.iter().map(|r| resolve_model_dir(r)).collect();
    let file = StackedFile::new(systems, stacker, tc.threshold);
    write_file(
        &best_dir.join(STACKED_FILE),
        &serde_json::to_string_pretty(&file).expect("stacker serializes"),
    )?;
    let pred_dir = dir.join("predictions");
    create_dir(&pred_dir)?;
    write_prediction_files(&pred_dir, "val", &pred)?;

    Ok(RunRecord {
        run_id,
        run_dir: dir.clone(),
        seed: config.seed,
        config: config.clone(),
        selection_metric: key,
        history: vec![rec],
        checkpoints: Vec::new(),
        best_checkpoint: best_dir,
        best_epoch: Some(1),
    })
}
