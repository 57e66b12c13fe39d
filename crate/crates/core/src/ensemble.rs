//! System combination: probability averaging and a stacked linear tagger.
//!
//! Prediction files hold one line per sentence with whitespace-separated
//! BAD probabilities printed to six decimals; an empty line is an empty
//! sentence.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{read_lines, DataError, QeSample};
use crate::numerics::sigmoid;
use crate::tags::{Stream, Tag};

#[derive(Debug, Error)]
pub enum EnsembleError {
    #[error("no systems to combine")]
    NoSystems,
    #[error("system {system}: {what} has a different shape from system {first}")]
    ShapeMismatch { first: String, system: String, what: String },
    #[error("probability {value} outside [0, 1] ({what})")]
    OutOfRange { value: f64, what: String },
    #[error("stacker needs at least one training token with a non-empty feature set")]
    EmptyFeatures,
    #[error("stacker training data contains only {} tags", .0.as_str())]
    SingleClass(Tag),
    #[error("stacking is only defined for MT tags, not {}", .0.as_str())]
    UnsupportedStream(Stream),
    #[error("{features} feature rows for {tags} gold tags")]
    LengthMismatch { features: usize, tags: usize },
    #[error("token {index} out of range for a sentence of {len} MT tokens")]
    TokenOutOfRange { index: usize, len: usize },
    #[error(transparent)]
    Data(#[from] DataError),
    #[error("stacker file {path}: {message}")]
    Format { path: std::path::PathBuf, message: String },
}

/// BAD probabilities of one system, per stream and sentence.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SystemPrediction {
    pub system_id: String,
    pub streams: BTreeMap<Stream, Vec<Vec<f64>>>,
    pub sentence_scores: Option<Vec<f64>>,
}

impl SystemPrediction {
    pub fn new(system_id: &str) -> Self {
        Self {
            system_id: system_id.to_string(),
            ..Default::default()
        }
    }

    pub fn with_stream(mut self, stream: Stream, probs: Vec<Vec<f64>>) -> Self {
        self.streams.insert(stream, probs);
        self
    }

    /// Tags obtained by thresholding BAD probabilities.
    pub fn tags(&self, stream: Stream, threshold: f64) -> Option<Vec<Vec<Tag>>> {
        self.streams
            .get(&stream)
            .map(|s| s.iter().map(|r| r.iter().map(|&p| Tag::from_bad_prob(p, threshold)).collect()).collect())
    }

    /// Checks every probability lies in `[0, 1]`.
    pub fn validate(&self) -> Result<(), EnsembleError> {
        for (stream, sents) in &self.streams {
            for &p in sents.iter().flatten() {
                if !(0.0..=1.0).contains(&p) {
                    return Err(EnsembleError::OutOfRange {
                        value: p,
                        what: format!("{} {}", self.system_id, stream.as_str()),
                    });
                }
            }
        }
        Ok(())
    }
}

fn same_shape(a: &[Vec<f64>], b: &[Vec<f64>]) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.len() == y.len())
}

/// Running mean; identical inputs come back unchanged bit for bit.
fn mean_into(acc: &mut f64, x: f64, count: usize) {
    *acc += (x - *acc) / count as f64;
}

/// Arithmetic mean of every probability and sentence score across systems.
/// All systems must cover the same streams with the same shapes.
pub fn average_predictions(systems: &[SystemPrediction]) -> Result<SystemPrediction, EnsembleError> {
    let (first, rest) = systems.split_first().ok_or(EnsembleError::NoSystems)?;
    let mismatch = |s: &SystemPrediction, what: &str| EnsembleError::ShapeMismatch {
        first: first.system_id.clone(),
        system: s.system_id.clone(),
        what: what.to_string(),
    };
    let mut out = first.clone();
    out.system_id = systems.iter().map(|s| s.system_id.as_str()).collect::<Vec<_>>().join("+");
    for (k, sys) in rest.iter().enumerate() {
        let count = k + 2;
        if sys.streams.len() != first.streams.len() {
            return Err(mismatch(sys, "stream set"));
        }
        for (stream, acc) in out.streams.iter_mut() {
            let other = sys.streams.get(stream).ok_or_else(|| mismatch(sys, stream.as_str()))?;
            if !same_shape(acc, other) {
                return Err(mismatch(sys, stream.as_str()));
            }
            for (a, o) in acc.iter_mut().flatten().zip(other.iter().flatten()) {
                mean_into(a, *o, count);
            }
        }
        match (&mut out.sentence_scores, &sys.sentence_scores) {
            (None, None) => {}
            (Some(acc), Some(other)) if acc.len() == other.len() => {
                for (a, o) in acc.iter_mut().zip(other) {
                    mean_into(a, *o, count);
                }
            }
            _ => return Err(mismatch(sys, "sentence scores")),
        }
    }
    Ok(out)
}

/// Feature templates of the stacked model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Template {
    Word,
    LeftWord,
    RightWord,
    LeftBigram,
    RightBigram,
    SourceWord,
    SourceLeft,
    SourceRight,
    SystemProb,
    SystemBin,
}

impl Template {
    pub const ALL: [Template; 10] = [
        Template::Word,
        Template::LeftWord,
        Template::RightWord,
        Template::LeftBigram,
        Template::RightBigram,
        Template::SourceWord,
        Template::SourceLeft,
        Template::SourceRight,
        Template::SystemProb,
        Template::SystemBin,
    ];
}

pub const START_SYMBOL: &str = "<s>";
pub const STOP_SYMBOL: &str = "</s>";
pub const UNALIGNED_SYMBOL: &str = "<unaligned>";

/// Sparse feature vector: (name, value) pairs, names unique.
pub type Features = Vec<(String, f64)>;

/// Label of the 0.1-wide bin holding `p`; 1.0 falls in the top bin.
pub fn probability_bin(p: f64) -> String {
    let b = ((p * 10.0).floor() as i64).clamp(0, 9);
    format!("{:.1}-{:.1}", b as f64 / 10.0, (b + 1) as f64 / 10.0)
}

fn at(seq: &[String], i: isize) -> &str {
    if i < 0 {
        START_SYMBOL
    } else if i as usize >= seq.len() {
        STOP_SYMBOL
    } else {
        &seq[i as usize]
    }
}

/// Features of MT token `index`: the word, its neighbours and bigrams, the
/// leftmost aligned source word with its neighbours, and for each system
/// its BAD probability raw and binned. `system_probs[k]` is system `k`'s
/// probability for this token.
pub fn extract_features(
    sample: &QeSample,
    index: usize,
    system_probs: &[f64],
    templates: &[Template],
) -> Result<Features, EnsembleError> {
    let mt = &sample.mt;
    if index >= mt.len() {
        return Err(EnsembleError::TokenOutOfRange { index, len: mt.len() });
    }
    let i = index as isize;
    let aligned = sample.alignments.iter().filter(|&&(_, m)| m == index).map(|&(s, _)| s).min();
    let src = |off: isize| match aligned {
        Some(a) => at(&sample.source, a as isize + off).to_string(),
        None => UNALIGNED_SYMBOL.to_string(),
    };
    let mut out = Features::new();
    for t in templates {
        match t {
            Template::Word => out.push((format!("w={}", at(mt, i)), 1.0)),
            Template::LeftWord => out.push((format!("wl={}", at(mt, i - 1)), 1.0)),
            Template::RightWord => out.push((format!("wr={}", at(mt, i + 1)), 1.0)),
            Template::LeftBigram => out.push((format!("bl={}|{}", at(mt, i - 1), at(mt, i)), 1.0)),
            Template::RightBigram => out.push((format!("br={}|{}", at(mt, i), at(mt, i + 1)), 1.0)),
            Template::SourceWord => out.push((format!("s={}", src(0)), 1.0)),
            Template::SourceLeft => out.push((format!("sl={}", src(-1)), 1.0)),
            Template::SourceRight => out.push((format!("sr={}", src(1)), 1.0)),
            Template::SystemProb => {
                for (k, &p) in system_probs.iter().enumerate() {
                    out.push((format!("sys{k}"), p));
                }
            }
            Template::SystemBin => {
                for (k, &p) in system_probs.iter().enumerate() {
                    out.push((format!("sys{k}_bin={}", probability_bin(p)), 1.0));
                }
            }
        }
    }
    Ok(out)
}

/// Features for every MT token of every sample, with probabilities taken
/// from the MT stream of each system.
pub fn corpus_features(
    samples: &[QeSample],
    systems: &[SystemPrediction],
    templates: &[Template],
) -> Result<Vec<Vec<Features>>, EnsembleError> {
    let mut streams = Vec::with_capacity(systems.len());
    for s in systems {
        let probs = s.streams.get(&Stream::Mt).ok_or_else(|| EnsembleError::ShapeMismatch {
            first: "corpus".into(),
            system: s.system_id.clone(),
            what: "mt".into(),
        })?;
        let lens: Vec<Vec<f64>> = samples.iter().map(|x| vec![0.0; x.mt.len()]).collect();
        if !same_shape(probs, &lens) {
            return Err(EnsembleError::ShapeMismatch {
                first: "corpus".into(),
                system: s.system_id.clone(),
                what: "mt".into(),
            });
        }
        streams.push(probs);
    }
    samples
        .iter()
        .enumerate()
        .map(|(si, sample)| {
            (0..sample.mt.len())
                .map(|ti| {
                    let probs: Vec<f64> = streams.iter().map(|s| s[si][ti]).collect();
                    extract_features(sample, ti, &probs, templates)
                })
                .collect()
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct StackerOptions {
    /// L2 penalty on the weights (the bias is not penalized).
    pub l2: f64,
    /// Stop once the gradient norm falls below this.
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for StackerOptions {
    fn default() -> Self {
        Self {
            l2: 1e-2,
            tolerance: 1e-6,
            max_iterations: 5000,
        }
    }
}

/// Regularized logistic loss over a fixed, indexed training set.
#[derive(Debug, Clone)]
pub struct StackerProblem {
    rows: Vec<Vec<(usize, f64)>>,
    /// 1 for BAD, 0 for OK.
    targets: Vec<f64>,
    dim: usize,
    l2: f64,
}

impl StackerProblem {
    fn new(rows: Vec<Vec<(usize, f64)>>, gold: &[Tag], dim: usize, l2: f64) -> Self {
        let targets = gold.iter().map(|t| t.class() as f64).collect();
        Self { rows, targets, dim, l2 }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    fn score(row: &[(usize, f64)], w: &[f64], b: f64) -> f64 {
        b + row.iter().map(|&(j, v)| w[j] * v).sum::<f64>()
    }

    /// Mean logistic loss plus `l2 / 2 * |w|^2`.
    pub fn objective(&self, w: &[f64], b: f64) -> f64 {
        let n = self.rows.len() as f64;
        let data: f64 = self
            .rows
            .iter()
            .zip(&self.targets)
            .map(|(r, &y)| {
                let z = Self::score(r, w, b);
                // log(1 + e^z) - y z, stable for large |z|
                z.max(0.0) + (-z.abs()).exp().ln_1p() - y * z
            })
            .sum();
        data / n + 0.5 * self.l2 * w.iter().map(|v| v * v).sum::<f64>()
    }

    /// Gradient with respect to (weights, bias).
    pub fn gradient(&self, w: &[f64], b: f64) -> (Vec<f64>, f64) {
        let n = self.rows.len() as f64;
        let mut gw: Vec<f64> = w.iter().map(|v| self.l2 * v).collect();
        let mut gb = 0.0;
        for (r, &y) in self.rows.iter().zip(&self.targets) {
            let d = (sigmoid(Self::score(r, w, b)) - y) / n;
            gb += d;
            for &(j, v) in r {
                gw[j] += d * v;
            }
        }
        (gw, gb)
    }

    /// One plain gradient step of size `step`.
    pub fn gradient_step(&self, w: &mut [f64], b: &mut f64, step: f64) {
        let (gw, gb) = self.gradient(w, *b);
        for (x, g) in w.iter_mut().zip(gw) {
            *x -= step * g;
        }
        *b -= step * gb;
    }
}

/// Summary of a stacker fit.
#[derive(Debug, Clone, PartialEq)]
pub struct StackerFit {
    pub iterations: usize,
    pub objective: f64,
    pub gradient_norm: f64,
    pub converged: bool,
}

/// L2-regularized logistic regression over sparse features, predicting
/// BAD for MT tokens.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearStacker {
    pub templates: Vec<Template>,
    /// Feature name to column, in sorted name order.
    pub index: BTreeMap<String, usize>,
    pub weights: Vec<f64>,
    pub bias: f64,
    pub l2: f64,
}

impl LinearStacker {
    /// Rejects any stream other than MT.
    pub fn check_stream(stream: Stream) -> Result<(), EnsembleError> {
        match stream {
            Stream::Mt => Ok(()),
            other => Err(EnsembleError::UnsupportedStream(other)),
        }
    }

    /// Builds the feature index from `features` and the matching problem.
    pub fn problem(features: &[Features], gold: &[Tag], l2: f64) -> Result<(BTreeMap<String, usize>, StackerProblem), EnsembleError> {
        if features.len() != gold.len() {
            return Err(EnsembleError::LengthMismatch {
                features: features.len(),
                tags: gold.len(),
            });
        }
        let mut names: Vec<&str> = features.iter().flatten().map(|(n, _)| n.as_str()).collect();
        names.sort_unstable();
        names.dedup();
        if names.is_empty() {
            return Err(EnsembleError::EmptyFeatures);
        }
        match (gold.contains(&Tag::Ok), gold.contains(&Tag::Bad)) {
            (true, true) => {}
            (true, false) => return Err(EnsembleError::SingleClass(Tag::Ok)),
            (false, _) => return Err(EnsembleError::SingleClass(Tag::Bad)),
        }
        let index: BTreeMap<String, usize> = names.iter().enumerate().map(|(i, n)| (n.to_string(), i)).collect();
        let rows = features.iter().map(|f| Self::encode(&index, f)).collect();
        let dim = index.len();
        Ok((index, StackerProblem::new(rows, gold, dim, l2)))
    }

    fn encode(index: &BTreeMap<String, usize>, f: &Features) -> Vec<(usize, f64)> {
        f.iter().filter_map(|(n, v)| index.get(n).map(|&j| (j, *v))).collect()
    }

    /// Full-batch gradient descent with backtracking (Armijo) line search.
    pub fn train(
        features: &[Features],
        gold: &[Tag],
        templates: &[Template],
        opts: &StackerOptions,
    ) -> Result<(Self, StackerFit), EnsembleError> {
        let (index, problem) = Self::problem(features, gold, opts.l2)?;
        let mut w = vec![0.0; problem.dim()];
        let mut b = 0.0;
        let mut f = problem.objective(&w, b);
        let mut step = 1.0;
        let mut fit = StackerFit {
            iterations: 0,
            objective: f,
            gradient_norm: f64::INFINITY,
            converged: false,
        };
        for it in 0..=opts.max_iterations {
            let (gw, gb) = problem.gradient(&w, b);
            let sq = gw.iter().map(|v| v * v).sum::<f64>() + gb * gb;
            fit.gradient_norm = sq.sqrt();
            fit.iterations = it;
            if fit.gradient_norm < opts.tolerance {
                fit.converged = true;
                break;
            }
            if it == opts.max_iterations {
                break;
            }
            step *= 2.0;
            loop {
                let nw: Vec<f64> = w.iter().zip(&gw).map(|(x, g)| x - step * g).collect();
                let nb = b - step * gb;
                let nf = problem.objective(&nw, nb);
                if nf <= f - 1e-4 * step * sq || step < 1e-12 {
                    w = nw;
                    b = nb;
                    f = nf;
                    break;
                }
                step *= 0.5;
            }
        }
        fit.objective = f;
        if !fit.converged {
            log::warn!(
                "stacker stopped after {} iterations with gradient norm {:.3e}",
                fit.iterations,
                fit.gradient_norm
            );
        }
        Ok((
            Self {
                templates: templates.to_vec(),
                index,
                weights: w,
                bias: b,
                l2: opts.l2,
            },
            fit,
        ))
    }

    /// Decision value; features unseen in training are ignored.
    pub fn score(&self, f: &Features) -> f64 {
        StackerProblem::score(&Self::encode(&self.index, f), &self.weights, self.bias)
    }

    pub fn bad_probability(&self, f: &Features) -> f64 {
        sigmoid(self.score(f))
    }

    pub fn predict(&self, f: &Features, threshold: f64) -> Tag {
        Tag::from_bad_prob(self.bad_probability(f), threshold)
    }

    pub fn save(&self, path: &Path) -> Result<(), EnsembleError> {
        let json = serde_json::to_string(self).expect("stacker serializes");
        std::fs::write(path, json).map_err(|e| DataError::io(path, e))?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, EnsembleError> {
        let text = std::fs::read_to_string(path).map_err(|e| DataError::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| EnsembleError::Format {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
    }
}

/// Splits `0..n` into `k` contiguous folds of near-equal size (the first
/// `n % k` folds get one extra item). Returns held-out index lists.
pub fn jackknife_folds(n: usize, k: usize) -> Vec<Vec<usize>> {
    let k = k.clamp(1, n.max(1));
    let (base, extra) = (n / k, n % k);
    let mut start = 0;
    (0..k)
        .map(|f| {
            let len = base + usize::from(f < extra);
            let fold = (start..start + len).collect();
            start += len;
            fold
        })
        .collect()
}

/// Writes one line of six-decimal probabilities per sentence.
pub fn write_probabilities(path: &Path, probs: &[Vec<f64>]) -> Result<(), DataError> {
    let mut out = String::new();
    for sent in probs {
        let line: Vec<String> = sent.iter().map(|p| format!("{p:.6}")).collect();
        out.push_str(&line.join(" "));
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|e| DataError::io(path, e))
}

pub fn read_probabilities(path: &Path) -> Result<Vec<Vec<f64>>, DataError> {
    read_lines(path)?
        .iter()
        .enumerate()
        .map(|(i, l)| {
            l.split_whitespace()
                .map(|t| match t.parse::<f64>() {
                    Ok(v) if (0.0..=1.0).contains(&v) => Ok(v),
                    _ => Err(DataError::BadScore {
                        path: path.to_path_buf(),
                        line: i + 1,
                        value: t.to_string(),
                    }),
                })
                .collect()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sys(id: &str, probs: Vec<Vec<f64>>) -> SystemPrediction {
        SystemPrediction::new(id).with_stream(Stream::Mt, probs)
    }

    #[test]
    fn averaging_examples() {
        let a = sys("a", vec![vec![0.2]]);
        let b = sys("b", vec![vec![0.4]]);
        let avg = average_predictions(&[a.clone(), b]).unwrap();
        assert!((avg.streams[&Stream::Mt][0][0] - 0.3).abs() < 1e-15);
        let single = average_predictions(std::slice::from_ref(&a)).unwrap();
        assert_eq!(single.streams, a.streams);
        let three = average_predictions(&[
            sys("x", vec![vec![0.0]]),
            sys("y", vec![vec![0.5]]),
            sys("z", vec![vec![1.0]]),
        ])
        .unwrap();
        assert_eq!(three.streams[&Stream::Mt][0][0], 0.5);
    }

    #[test]
    fn averaging_identical_systems_is_exact() {
        let p = vec![vec![0.1, 0.7, 1.0 / 3.0], vec![], vec![0.123456789]];
        let systems: Vec<_> = (0..7).map(|i| sys(&i.to_string(), p.clone())).collect();
        assert_eq!(average_predictions(&systems).unwrap().streams[&Stream::Mt], p);
    }

    #[test]
    fn averaging_rejects_shape_mismatch() {
        let a = sys("a", vec![vec![0.2, 0.1]]);
        let b = sys("b", vec![vec![0.4]]);
        assert!(matches!(average_predictions(&[a, b]), Err(EnsembleError::ShapeMismatch { .. })));
        assert!(matches!(average_predictions(&[]), Err(EnsembleError::NoSystems)));
    }

    #[test]
    fn feature_boundaries_and_bins() {
        let mut s = QeSample::new("A B", "a b c");
        s.alignments = vec![(1, 0)];
        let f = extract_features(&s, 0, &[0.37], &Template::ALL).unwrap();
        let has = |n: &str| f.iter().any(|(k, _)| k == n);
        assert!(has("wl=<s>"));
        assert!(has("s=B") && has("sl=A") && has("sr=</s>"));
        assert!(has("sys0_bin=0.3-0.4"));
        let g = extract_features(&s, 2, &[1.0], &Template::ALL).unwrap();
        assert!(g.iter().any(|(k, _)| k == "s=<unaligned>"));
        assert!(g.iter().any(|(k, _)| k == "sys0_bin=0.9-1.0"));
        assert!(extract_features(&s, 3, &[], &Template::ALL).is_err());
    }

    fn separable(n: usize) -> (Vec<Features>, Vec<Tag>) {
        let feats = (0..n)
            .map(|i| {
                let bad = i % 3 == 0;
                vec![
                    (if bad { "cue=x" } else { "cue=y" }.to_string(), 1.0),
                    (format!("noise={}", i % 5), 1.0),
                ]
            })
            .collect();
        let tags = (0..n).map(|i| if i % 3 == 0 { Tag::Bad } else { Tag::Ok }).collect();
        (feats, tags)
    }

    #[test]
    fn stacker_fits_separable_data() {
        let (f, t) = separable(60);
        let (m, fit) = LinearStacker::train(&f, &t, &Template::ALL, &StackerOptions::default()).unwrap();
        assert!(fit.converged, "{fit:?}");
        let pred: Vec<Tag> = f.iter().map(|x| m.predict(x, 0.5)).collect();
        assert_eq!(pred, t);
    }

    #[test]
    fn stacker_objective_decreases_with_small_steps() {
        let (f, t) = separable(30);
        let (_, p) = LinearStacker::problem(&f, &t, 1e-2).unwrap();
        let mut w = vec![0.0; p.dim()];
        let mut b = 0.0;
        let mut prev = p.objective(&w, b);
        for _ in 0..50 {
            p.gradient_step(&mut w, &mut b, 1e-3);
            let now = p.objective(&w, b);
            assert!(now < prev);
            prev = now;
        }
    }

    #[test]
    fn stacker_rejects_degenerate_data() {
        let (f, _) = separable(6);
        assert!(matches!(
            LinearStacker::train(&f, &[Tag::Ok; 6], &[], &StackerOptions::default()),
            Err(EnsembleError::SingleClass(Tag::Ok))
        ));
        let empty: Vec<Features> = vec![vec![]; 2];
        assert!(matches!(
            LinearStacker::train(&empty, &[Tag::Ok, Tag::Bad], &[], &StackerOptions::default()),
            Err(EnsembleError::EmptyFeatures)
        ));
        assert!(LinearStacker::check_stream(Stream::Gap).is_err());
    }

    #[test]
    fn zero_features_predict_from_bias() {
        let f: Vec<Features> = (0..4).map(|_| vec![("c".to_string(), 0.0)]).collect();
        let t = [Tag::Bad, Tag::Ok, Tag::Ok, Tag::Ok];
        let (m, _) = LinearStacker::train(&f, &t, &[], &StackerOptions::default()).unwrap();
        let p: Vec<f64> = f.iter().map(|x| m.bad_probability(x)).collect();
        assert!(p.iter().all(|&v| v == p[0]));
        assert!((p[0] - 0.25).abs() < 1e-5);
    }

    #[test]
    fn folds_partition_the_range() {
        let folds = jackknife_folds(11, 5);
        assert_eq!(folds.iter().map(Vec::len).collect::<Vec<_>>(), vec![3, 2, 2, 2, 2]);
        let all: Vec<usize> = folds.concat();
        assert_eq!(all, (0..11).collect::<Vec<_>>());
        assert_eq!(jackknife_folds(2, 5).len(), 2);
    }

    #[test]
    fn probability_files_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p");
        let p = vec![vec![0.25, 1.0], vec![], vec![0.0]];
        write_probabilities(&path, &p).unwrap();
        assert_eq!(std::fs::read_to_string(&path).unwrap(), "0.250000 1.000000\n\n0.000000\n");
        assert_eq!(read_probabilities(&path).unwrap(), p);
    }
}
