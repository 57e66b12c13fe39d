//! Word-level F1 (OK, BAD and their product) and sentence-level Pearson /
//! Spearman correlation.

use serde::{Deserialize, Serialize};

use crate::tags::Tag;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MetricError {
    #[error("gold has {gold} entries, predictions have {pred}")]
    LengthMismatch { gold: usize, pred: usize },
    #[error("need at least 2 scores, got {0}")]
    TooFew(usize),
    #[error("correlation is undefined: {0} scores have zero variance")]
    ZeroVariance(&'static str),
    #[error("non-finite score")]
    NonFinite,
    #[error("unknown tag {0:?} (expected OK or BAD)")]
    UnknownTag(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WordMetricReport {
    pub f1_ok: f64,
    pub f1_bad: f64,
    pub f1_mult: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SentenceMetricReport {
    pub pearson_r: f64,
    pub spearman_rho: f64,
}

fn f1(tp: usize, fp: usize, fn_: usize) -> f64 {
    let p = if tp + fp == 0 { 0.0 } else { tp as f64 / (tp + fp) as f64 };
    let r = if tp + fn_ == 0 { 0.0 } else { tp as f64 / (tp + fn_) as f64 };
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

/// Micro-averaged F1 per class over a flat tag stream.
pub fn f1_mult(gold: &[Tag], pred: &[Tag]) -> Result<WordMetricReport, MetricError> {
    if gold.len() != pred.len() {
        return Err(MetricError::LengthMismatch {
            gold: gold.len(),
            pred: pred.len(),
        });
    }
    // [gold][pred]
    let mut cm = [[0usize; 2]; 2];
    for (g, p) in gold.iter().zip(pred) {
        cm[g.class()][p.class()] += 1;
    }
    let f1_ok = f1(cm[0][0], cm[1][0], cm[0][1]);
    let f1_bad = f1(cm[1][1], cm[0][1], cm[1][0]);
    Ok(WordMetricReport {
        f1_ok,
        f1_bad,
        f1_mult: f1_ok * f1_bad,
    })
}

/// [`f1_mult`] over per-sentence tag lists, concatenated.
pub fn f1_mult_corpus(gold: &[Vec<Tag>], pred: &[Vec<Tag>]) -> Result<WordMetricReport, MetricError> {
    if gold.len() != pred.len() {
        return Err(MetricError::LengthMismatch {
            gold: gold.len(),
            pred: pred.len(),
        });
    }
    for (g, p) in gold.iter().zip(pred) {
        if g.len() != p.len() {
            return Err(MetricError::LengthMismatch {
                gold: g.len(),
                pred: p.len(),
            });
        }
    }
    f1_mult(&gold.concat(), &pred.concat())
}

/// Parses `OK`/`BAD` strings.
pub fn parse_tags<S: AsRef<str>>(tokens: &[S]) -> Result<Vec<Tag>, MetricError> {
    tokens
        .iter()
        .map(|t| t.as_ref().parse().map_err(|_| MetricError::UnknownTag(t.as_ref().to_string())))
        .collect()
}

fn check_pair(x: &[f64], y: &[f64]) -> Result<(), MetricError> {
    if x.len() != y.len() {
        return Err(MetricError::LengthMismatch {
            gold: x.len(),
            pred: y.len(),
        });
    }
    if x.len() < 2 {
        return Err(MetricError::TooFew(x.len()));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(MetricError::NonFinite);
    }
    Ok(())
}

/// Sample Pearson correlation.
pub fn pearson(gold: &[f64], pred: &[f64]) -> Result<f64, MetricError> {
    check_pair(gold, pred)?;
    let n = gold.len() as f64;
    let mx = gold.iter().sum::<f64>() / n;
    let my = pred.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in gold.iter().zip(pred) {
        let (dx, dy) = (x - mx, y - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 {
        return Err(MetricError::ZeroVariance("gold"));
    }
    if syy == 0.0 {
        return Err(MetricError::ZeroVariance("predicted"));
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// 1-based ranks; tied values share the mean of their ranks.
pub fn average_ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut ranks = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

/// Pearson correlation of average ranks.
pub fn spearman(gold: &[f64], pred: &[f64]) -> Result<f64, MetricError> {
    check_pair(gold, pred)?;
    pearson(&average_ranks(gold), &average_ranks(pred))
}

pub fn sentence_report(gold: &[f64], pred: &[f64]) -> Result<SentenceMetricReport, MetricError> {
    Ok(SentenceMetricReport {
        pearson_r: pearson(gold, pred)?,
        spearman_rho: spearman(gold, pred)?,
    })
}

/// Fraction of equal entries.
pub fn accuracy<T: PartialEq>(gold: &[T], pred: &[T]) -> Result<f64, MetricError> {
    if gold.len() != pred.len() {
        return Err(MetricError::LengthMismatch {
            gold: gold.len(),
            pred: pred.len(),
        });
    }
    if gold.is_empty() {
        return Ok(0.0);
    }
    Ok(gold.iter().zip(pred).filter(|(a, b)| a == b).count() as f64 / gold.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use Tag::{Bad as B, Ok as O};

    #[test]
    fn perfect_prediction() {
        let g = [O, B, O];
        let r = f1_mult(&g, &g).unwrap();
        assert_eq!(r.f1_mult, 1.0);
    }

    #[test]
    fn all_ok_prediction_scores_zero() {
        let r = f1_mult(&[O, B, O, O], &[O, O, O, O]).unwrap();
        assert_eq!(r.f1_bad, 0.0);
        assert_eq!(r.f1_mult, 0.0);
    }

    #[test]
    fn hand_confusion_matrix() {
        // gold OK,BAD,OK,OK / pred OK,BAD,BAD,OK:
        // OK: tp=2 fp=0 fn=1 -> 0.8; BAD: tp=1 fp=1 fn=0 -> 2/3
        let r = f1_mult(&[O, B, O, O], &[O, B, B, O]).unwrap();
        assert!((r.f1_ok - 0.8).abs() < 1e-12);
        assert!((r.f1_bad - 2.0 / 3.0).abs() < 1e-12);
        assert!((r.f1_mult - 0.8 * 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn length_and_label_errors() {
        assert!(f1_mult(&[O], &[O, B]).is_err());
        assert!(matches!(parse_tags(&["OK", "bad"]), Err(MetricError::UnknownTag(t)) if t == "bad"));
    }

    #[test]
    fn pearson_cases() {
        assert!((pearson(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap() - 1.0).abs() < 1e-12);
        assert!((pearson(&[1.0, 2.0, 3.0], &[-1.0, -2.0, -3.0]).unwrap() + 1.0).abs() < 1e-12);
        // sxy = 3, sxx = 2, syy = 14/3
        let expected = 3.0 / (2.0f64 * 14.0 / 3.0).sqrt();
        assert!((pearson(&[1.0, 2.0, 3.0], &[1.0, 2.0, 4.0]).unwrap() - expected).abs() < 1e-12);
        assert!((expected - 0.9820).abs() < 5e-5);
    }

    #[test]
    fn undefined_correlation_is_an_error() {
        assert!(matches!(pearson(&[1.0, 1.0], &[1.0, 2.0]), Err(MetricError::ZeroVariance(_))));
        assert!(matches!(spearman(&[1.0, 2.0], &[3.0, 3.0]), Err(MetricError::ZeroVariance(_))));
        assert!(matches!(pearson(&[1.0], &[1.0]), Err(MetricError::TooFew(1))));
    }

    #[test]
    fn spearman_cases() {
        // sum d^2 = 2 -> 1 - 6*2/(4*15) = 0.8
        assert!((spearman(&[1.0, 2.0, 3.0, 4.0], &[1.0, 3.0, 2.0, 4.0]).unwrap() - 0.8).abs() < 1e-12);
        assert!((spearman(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap() + 1.0).abs() < 1e-12);
        let x = [0.1, 0.5, 0.2, 0.9];
        let y: Vec<f64> = x.iter().map(|v: &f64| v.exp() * 3.0).collect();
        assert!((spearman(&x, &y).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn ties_get_average_ranks() {
        assert_eq!(average_ranks(&[3.0, 1.0, 3.0, 2.0]), vec![3.5, 1.0, 3.5, 2.0]);
    }
}
