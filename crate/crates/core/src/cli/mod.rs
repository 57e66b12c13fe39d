//! The `kiwi` command line: `train`, `predict`, `evaluate`, `label` and
//! `render`.
//!
//! Configuration files are YAML with a strict schema; unknown keys are
//! errors that name the offending key path. Relative paths inside a config
//! file are relative to the file itself. `KIWI_LOG` sets the log filter
//! (`info` shows per-epoch progress).

mod render;

pub use render::{escape_html, render, render_sentence, RenderError, RenderFormat};

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::data::{load_corpus, load_triplets, read_lines, write_scores, write_tags, CorpusFiles, DEFAULT_MAX_LEN};
use crate::ensemble::{average_predictions, write_probabilities, SystemPrediction};
use crate::labels::label_triplet;
use crate::metrics::{f1_mult_corpus, pearson, spearman};
use crate::tags::{Stream, Tag};
use crate::trainer::{self, LoadedModel, TrainConfig};

#[derive(Debug, Parser)]
#[command(name = "kiwi", version, about = "Translation quality estimation: train, predict, evaluate, label, render")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a model from a YAML configuration.
    Train(TrainArgs),
    /// Tag new data with a trained model.
    Predict(PredictArgs),
    /// Score predictions against gold tags and HTER.
    Evaluate(EvaluateArgs),
    /// Derive gold tags and HTER from post-edits.
    Label(LabelArgs),
    /// Show tagged MT output with BAD words and gaps in red.
    Render(RenderArgs),
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Overrides the configured seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Overrides the configured output directory.
    #[arg(long)]
    pub output_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    /// YAML file with `model`, `data`, `output_dir` and `threshold`.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Model directory or run directory.
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub source: Option<PathBuf>,
    #[arg(long)]
    pub mt: Option<PathBuf>,
    #[arg(long)]
    pub alignments: Option<PathBuf>,
    #[arg(long)]
    pub output_dir: Option<PathBuf>,
    #[arg(long)]
    pub threshold: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub gold_mt: Option<PathBuf>,
    #[arg(long)]
    pub gold_gap: Option<PathBuf>,
    #[arg(long)]
    pub gold_source: Option<PathBuf>,
    #[arg(long)]
    pub gold_hter: Option<PathBuf>,
    /// MT tag or probability files; several are averaged.
    #[arg(long, num_args = 1..)]
    pub pred_mt: Vec<PathBuf>,
    #[arg(long, num_args = 1..)]
    pub pred_gap: Vec<PathBuf>,
    #[arg(long, num_args = 1..)]
    pub pred_source: Vec<PathBuf>,
    /// Sentence score files; several are averaged.
    #[arg(long, num_args = 1..)]
    pub pred_sentence: Vec<PathBuf>,
    #[arg(long, default_value_t = 0.5)]
    pub threshold: f64,
}

#[derive(Debug, Args)]
pub struct LabelArgs {
    #[arg(long)]
    pub mt: PathBuf,
    #[arg(long)]
    pub pe: PathBuf,
    /// Needed, together with alignments, for source tags.
    #[arg(long)]
    pub source: Option<PathBuf>,
    #[arg(long)]
    pub alignments: Option<PathBuf>,
    #[arg(long)]
    pub output_dir: PathBuf,
    #[arg(long, default_value_t = DEFAULT_MAX_LEN)]
    pub max_len: usize,
}

#[derive(Debug, Args)]
pub struct RenderArgs {
    /// Tokenized MT, one sentence per line.
    #[arg(long)]
    pub mt: PathBuf,
    /// MT tags or BAD probabilities.
    #[arg(long)]
    pub mt_tags: PathBuf,
    /// Gap tags or BAD probabilities.
    #[arg(long)]
    pub gap_tags: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = RenderFormat::Ansi)]
    pub format: RenderFormat,
    #[arg(long, default_value_t = 0.5)]
    pub threshold: f64,
    /// Write here instead of standard output.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

/// Settings of `kiwi predict --config`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredictConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<PathBuf>,
    #[serde(default)]
    pub data: CorpusFiles,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threshold: Option<f64>,
}

/// Parses a YAML file into `T`; schema errors carry the key path.
pub fn load_yaml<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    let de = serde_yaml::Deserializer::from_str(&text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let at = e.path().to_string();
        if at == "." {
            anyhow!("{}: {}", path.display(), e.inner())
        } else {
            anyhow!("{}: {at}: {}", path.display(), e.inner())
        }
    })
}

fn config_base(path: &Path) -> PathBuf {
    path.parent().map(Path::to_path_buf).unwrap_or_default()
}

/// Reads a training configuration and resolves its paths.
pub fn load_train_config(path: &Path) -> Result<TrainConfig> {
    let mut cfg: TrainConfig = load_yaml(path)?;
    cfg.resolve_paths(&config_base(path));
    Ok(cfg)
}

pub fn init_logging() {
    let env = env_logger::Env::new().filter_or("KIWI_LOG", "warn");
    let _ = env_logger::Builder::from_env(env).format_timestamp(None).try_init();
}

/// Parses `argv` (program name first), runs the command and returns the
/// process exit status. Failures print a one-line diagnostic to stderr.
pub fn run_command<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match execute(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e:#}");
            1
        }
    }
}

pub fn execute(command: Command) -> Result<()> {
    match command {
        Command::Train(a) => cmd_train(a),
        Command::Predict(a) => cmd_predict(a),
        Command::Evaluate(a) => cmd_evaluate(a),
        Command::Label(a) => cmd_label(a),
        Command::Render(a) => cmd_render(a),
    }
}

fn cmd_train(a: TrainArgs) -> Result<()> {
    let mut cfg = load_train_config(&a.config)?;
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    if let Some(d) = a.output_dir {
        cfg.output_dir = d;
    }
    let rec = trainer::train(&cfg)?;
    let score = rec
        .best_epoch
        .and_then(|e| rec.history.get(e - 1))
        .and_then(|r| r.selection)
        .map_or("n/a".to_string(), |v| format!("{v:.6}"));
    println!("run {} finished in {}", rec.run_id, rec.run_dir.display());
    println!(
        "best epoch {} ({}={score}), model {}",
        rec.best_epoch.map_or("none".to_string(), |e| e.to_string()),
        rec.selection_metric,
        rec.best_checkpoint.display()
    );
    Ok(())
}

fn cmd_predict(a: PredictArgs) -> Result<()> {
    let mut cfg = match &a.config {
        Some(p) => {
            let mut c: PredictConfig = load_yaml(p)?;
            let base = config_base(p);
            c.data.resolve(&base);
            c.model = c.model.map(|m| if m.is_relative() { base.join(m) } else { m });
            c.output_dir = c.output_dir.map(|m| if m.is_relative() { base.join(m) } else { m });
            c
        }
        None => PredictConfig::default(),
    };
    if a.seed.is_some() {
        log::info!("prediction is deterministic; --seed has no effect");
    }
    cfg.model = a.model.or(cfg.model);
    cfg.data.source = a.source.or(cfg.data.source);
    cfg.data.mt = a.mt.or(cfg.data.mt);
    cfg.data.alignments = a.alignments.or(cfg.data.alignments);
    cfg.output_dir = a.output_dir.or(cfg.output_dir);
    let threshold = a.threshold.or(cfg.threshold).unwrap_or(0.5);
    let model_path = cfg.model.ok_or_else(|| anyhow!("no model given (--model or `model` in the config)"))?;
    let out = cfg
        .output_dir
        .ok_or_else(|| anyhow!("no output directory given (--output-dir or `output_dir` in the config)"))?;
    let files = CorpusFiles {
        source: cfg.data.source,
        mt: cfg.data.mt,
        alignments: cfg.data.alignments,
        ..Default::default()
    };
    let samples = load_corpus(&files, usize::MAX)?;
    let model = LoadedModel::load(&model_path)?;
    let pred = model.predict(&samples, &model_path.display().to_string())?;
    std::fs::create_dir_all(&out).with_context(|| format!("cannot create {}", out.display()))?;
    for (stream, probs) in &pred.streams {
        let name = stream.as_str();
        let p = out.join(format!("{name}.probs"));
        write_probabilities(&p, probs)?;
        let tags = pred.tags(*stream, threshold).expect("stream present");
        write_tags(&out.join(format!("{name}.tags")), &tags)?;
        println!("wrote {}", p.display());
    }
    if let Some(s) = &pred.sentence_scores {
        let p = out.join("sentence.scores");
        write_scores(&p, s)?;
        println!("wrote {}", p.display());
    }
    Ok(())
}

/// Reads a file of per-token BAD probabilities or OK/BAD tags (tags read
/// as probabilities 0 and 1).
pub fn read_word_predictions(path: &Path) -> Result<Vec<Vec<f64>>> {
    let lines = read_lines(path)?;
    lines
        .iter()
        .enumerate()
        .map(|(i, l)| {
            l.split_whitespace()
                .map(|t| match t.parse::<Tag>() {
                    Ok(Tag::Ok) => Ok(0.0),
                    Ok(Tag::Bad) => Ok(1.0),
                    Err(_) => match t.parse::<f64>() {
                        Ok(v) if (0.0..=1.0).contains(&v) => Ok(v),
                        _ => bail!("{}:{}: expected OK, BAD or a probability, found {t:?}", path.display(), i + 1),
                    },
                })
                .collect()
        })
        .collect()
}

fn read_gold_tags(path: &Path) -> Result<Vec<Vec<Tag>>> {
    read_lines(path)?
        .iter()
        .enumerate()
        .map(|(i, l)| {
            l.split_whitespace()
                .map(|t| t.parse::<Tag>().map_err(|_| anyhow!("{}:{}: unknown tag {t:?}", path.display(), i + 1)))
                .collect()
        })
        .collect()
}

fn read_score_file(path: &Path) -> Result<Vec<f64>> {
    read_lines(path)?
        .iter()
        .enumerate()
        .map(|(i, l)| {
            l.trim()
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| anyhow!("{}:{}: expected a number, found {l:?}", path.display(), i + 1))
        })
        .collect()
}

/// Averaged word predictions over several files.
fn averaged(paths: &[PathBuf], stream: Stream) -> Result<Vec<Vec<f64>>> {
    let systems = paths
        .iter()
        .map(|p| Ok(SystemPrediction::new(&p.display().to_string()).with_stream(stream, read_word_predictions(p)?)))
        .collect::<Result<Vec<_>>>()?;
    let avg = average_predictions(&systems)?;
    Ok(avg.streams.into_iter().next().map(|(_, v)| v).unwrap_or_default())
}

/// Metric name and value (or why it is undefined), in report order.
pub type Report = Vec<(String, std::result::Result<f64, String>)>;

pub fn evaluate(a: &EvaluateArgs) -> Result<Report> {
    let mut report = Report::new();
    let streams = [
        (Stream::Mt, &a.gold_mt, &a.pred_mt),
        (Stream::Gap, &a.gold_gap, &a.pred_gap),
        (Stream::Source, &a.gold_source, &a.pred_source),
    ];
    for (stream, gold, preds) in streams {
        let name = stream.as_str();
        match (gold, preds.is_empty()) {
            (Some(g), false) => {
                let gold = read_gold_tags(g)?;
                let probs = averaged(preds, stream)?;
                let tags: Vec<Vec<Tag>> = probs
                    .iter()
                    .map(|r| r.iter().map(|&p| Tag::from_bad_prob(p, a.threshold)).collect())
                    .collect();
                let r = f1_mult_corpus(&gold, &tags).with_context(|| format!("{name} predictions do not match gold"))?;
                report.push((format!("{name}_f1_ok"), Ok(r.f1_ok)));
                report.push((format!("{name}_f1_bad"), Ok(r.f1_bad)));
                report.push((format!("{name}_f1_mult"), Ok(r.f1_mult)));
            }
            (None, false) => bail!("{name} predictions given without gold {name} tags"),
            _ => {}
        }
    }
    match (&a.gold_hter, a.pred_sentence.is_empty()) {
        (Some(g), false) => {
            let gold = read_score_file(g)?;
            let mut avg: Option<Vec<f64>> = None;
            for (k, p) in a.pred_sentence.iter().enumerate() {
                let s = read_score_file(p)?;
                match &mut avg {
                    None => avg = Some(s),
                    Some(acc) => {
                        if acc.len() != s.len() {
                            bail!("{} has {} scores, expected {}", p.display(), s.len(), acc.len());
                        }
                        for (x, y) in acc.iter_mut().zip(s) {
                            *x += (y - *x) / (k + 1) as f64;
                        }
                    }
                }
            }
            let pred = avg.expect("at least one file");
            if pred.len() != gold.len() {
                bail!("{} sentence scores for {} gold scores", pred.len(), gold.len());
            }
            report.push(("pearson".into(), pearson(&gold, &pred).map_err(|e| e.to_string())));
            report.push(("spearman".into(), spearman(&gold, &pred).map_err(|e| e.to_string())));
        }
        (None, false) => bail!("sentence predictions given without gold HTER"),
        _ => {}
    }
    if report.is_empty() {
        bail!("nothing to evaluate: give gold and prediction files for at least one level");
    }
    Ok(report)
}

fn cmd_evaluate(a: EvaluateArgs) -> Result<()> {
    for (name, value) in evaluate(&a)? {
        match value {
            Ok(v) => println!("{name}={v:.6}"),
            Err(why) => println!("{name}=undefined ({why})"),
        }
    }
    Ok(())
}

fn cmd_label(a: LabelArgs) -> Result<()> {
    let files = CorpusFiles {
        source: a.source.clone(),
        mt: Some(a.mt),
        pe: Some(a.pe),
        alignments: a.alignments.clone(),
        ..Default::default()
    };
    let triplets = load_triplets(&files, a.max_len)?;
    let mut mt_tags = Vec::with_capacity(triplets.len());
    let mut gap_tags = Vec::with_capacity(triplets.len());
    let mut src_tags = Vec::with_capacity(triplets.len());
    let mut hter = Vec::with_capacity(triplets.len());
    for (i, t) in triplets.iter().enumerate() {
        let l = label_triplet(t).with_context(|| format!("sentence {}", i + 1))?;
        mt_tags.push(l.tags.mt_tags);
        gap_tags.push(l.tags.gap_tags);
        src_tags.push(l.tags.source_tags);
        hter.push(l.hter);
    }
    let out = &a.output_dir;
    std::fs::create_dir_all(out).with_context(|| format!("cannot create {}", out.display()))?;
    write_tags(&out.join("mt.tags"), &mt_tags)?;
    write_tags(&out.join("gap.tags"), &gap_tags)?;
    if a.source.is_some() && a.alignments.is_some() {
        write_tags(&out.join("source.tags"), &src_tags)?;
    }
    write_scores(&out.join("hter"), &hter)?;
    let mean = if hter.is_empty() { 0.0 } else { hter.iter().sum::<f64>() / hter.len() as f64 };
    println!("labelled {} sentences into {} (mean HTER {mean:.4})", triplets.len(), out.display());
    Ok(())
}

fn cmd_render(a: RenderArgs) -> Result<()> {
    let sentences: Vec<Vec<String>> = read_lines(&a.mt)?
        .iter()
        .map(|l| l.split_whitespace().map(String::from).collect())
        .collect();
    let to_tags = |p: Vec<Vec<f64>>| -> Vec<Vec<Tag>> {
        p.into_iter()
            .map(|r| r.into_iter().map(|v| Tag::from_bad_prob(v, a.threshold)).collect())
            .collect()
    };
    let mt = to_tags(read_word_predictions(&a.mt_tags)?);
    let gaps = a.gap_tags.as_deref().map(read_word_predictions).transpose()?.map(to_tags);
    let text = render(&sentences, &mt, gaps.as_deref(), a.format)?;
    match &a.output {
        Some(p) => std::fs::write(p, text).with_context(|| format!("cannot write {}", p.display()))?,
        None => print!("{text}"),
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_config_key_is_named() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.yml");
        std::fs::write(
            &p,
            "output_dir: out\ndata:\n  train:\n    source: a\n    mt: b\nmodel:\n  kind: quetch\n  task: mt\ntraining:\n  lerning_rate: 0.1\n",
        )
        .unwrap();
        let err = load_train_config(&p).unwrap_err().to_string();
        assert!(err.contains("lerning_rate"), "{err}");
        assert!(err.contains("training"), "{err}");
    }

    #[test]
    fn unknown_model_key_is_named() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.yml");
        std::fs::write(
            &p,
            "output_dir: out\ndata:\n  train:\n    source: a\n    mt: b\nmodel:\n  kind: quetch\n  task: mt\n  windw: 3\n",
        )
        .unwrap();
        let err = load_train_config(&p).unwrap_err().to_string();
        assert!(err.contains("windw"), "{err}");
    }

    #[test]
    fn config_paths_resolve_against_the_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.yml");
        std::fs::write(&p, "output_dir: out\ndata:\n  train:\n    source: a\n    mt: b\nmodel:\n  kind: nuqe\n  task: gap\n").unwrap();
        let cfg = load_train_config(&p).unwrap();
        assert_eq!(cfg.output_dir, dir.path().join("out"));
        assert_eq!(cfg.data.train.mt, Some(dir.path().join("b")));
    }

    #[test]
    fn config_roundtrip_is_a_fixed_point() {
        let text = "seed: 3\noutput_dir: out\ndata:\n  train:\n    source: a\n    mt: b\n  valid:\n    source: c\n    mt: d\nmodel:\n  kind: estimator\n  predictor:\n    direction: reverse\ntraining:\n  epochs: 2\n  clip_norm: 1.0\n";
        let a: TrainConfig = serde_yaml::from_str(text).unwrap();
        let b: TrainConfig = serde_yaml::from_str(&serde_yaml::to_string(&a).unwrap()).unwrap();
        assert_eq!(a, b);
        assert_eq!(serde_yaml::to_string(&a).unwrap(), serde_yaml::to_string(&b).unwrap());
    }

    #[test]
    fn bad_subcommand_fails() {
        assert_ne!(run_command(["kiwi", "frobnicate"]), 0);
        assert_ne!(run_command(["kiwi", "train", "--config", "/nonexistent/c.yml"]), 0);
    }

    #[test]
    fn evaluate_rejects_mismatched_lengths() {
        let dir = tempfile::tempdir().unwrap();
        let g = dir.path().join("g");
        let p = dir.path().join("p");
        std::fs::write(&g, "OK BAD\nOK\n").unwrap();
        std::fs::write(&p, "0.1 0.9\n").unwrap();
        let args = EvaluateArgs {
            gold_mt: Some(g),
            gold_gap: None,
            gold_source: None,
            gold_hter: None,
            pred_mt: vec![p],
            pred_gap: vec![],
            pred_source: vec![],
            pred_sentence: vec![],
            threshold: 0.5,
        };
        assert!(evaluate(&args).is_err());
    }

    #[test]
    fn evaluate_averages_files() {
        let dir = tempfile::tempdir().unwrap();
        let g = dir.path().join("g");
        std::fs::write(&g, "OK BAD\n").unwrap();
        let p1 = dir.path().join("p1");
        let p2 = dir.path().join("p2");
        std::fs::write(&p1, "0.0 0.4\n").unwrap();
        std::fs::write(&p2, "OK BAD\n").unwrap();
        let args = EvaluateArgs {
            gold_mt: Some(g),
            gold_gap: None,
            gold_source: None,
            gold_hter: None,
            pred_mt: vec![p1, p2],
            pred_gap: vec![],
            pred_source: vec![],
            pred_sentence: vec![],
            threshold: 0.5,
        };
        let r = evaluate(&args).unwrap();
        assert_eq!(r[2], ("mt_f1_mult".to_string(), Ok(1.0)));
    }
}
