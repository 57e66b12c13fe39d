//! Synthetic parallel data for tests, demos and the bundled toy corpus.
//!
//! Source sentences are random words `s0 .. s{V-1}`; the reference
//! translation (the post-edit) maps `s{i}` to `t{i}` word by word. The MT
//! output is the reference with random substitutions, deletions and
//! insertions, and alignments link each surviving MT word to the source
//! word it came from.

use std::path::{Path, PathBuf};

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::{format_alignments, write_lines, write_scores, write_tags, CorpusFiles, DataError, QeSample, SentenceTriplet};
use crate::tags::Tag;
use crate::labels::{label_triplet, LabelError};

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticConfig {
    pub vocab_size: usize,
    pub min_len: usize,
    pub max_len: usize,
    /// Per-token probabilities of each corruption.
    pub substitution: f64,
    pub deletion: f64,
    pub insertion: f64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            vocab_size: 40,
            min_len: 4,
            max_len: 12,
            substitution: 0.12,
            deletion: 0.05,
            insertion: 0.05,
        }
    }
}

pub fn source_word(i: usize) -> String {
    format!("s{i}")
}

/// Reference translation of a source word.
pub fn translate(word: &str) -> String {
    match word.strip_prefix('s') {
        Some(i) => format!("t{i}"),
        None => word.to_string(),
    }
}

fn target_word(i: usize) -> String {
    format!("t{i}")
}

fn wrong_word(rng: &mut ChaCha8Rng, vocab: usize, right: &str) -> String {
    loop {
        let w = target_word(rng.gen_range(0..vocab));
        if w != right || vocab < 2 {
            return w;
        }
    }
}

fn random_source(rng: &mut ChaCha8Rng, cfg: &SyntheticConfig) -> Vec<String> {
    let len = rng.gen_range(cfg.min_len..=cfg.max_len);
    (0..len).map(|_| source_word(rng.gen_range(0..cfg.vocab_size))).collect()
}

/// `n` random (source, MT, post-edit) triplets.
pub fn generate_triplets(cfg: &SyntheticConfig, n: usize, seed: u64) -> Vec<SentenceTriplet> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let source = random_source(&mut rng, cfg);
            let pe: Vec<String> = source.iter().map(|w| translate(w)).collect();
            let mut mt = Vec::with_capacity(pe.len() + 2);
            let mut alignments = Vec::new();
            for (j, right) in pe.iter().enumerate() {
                let r: f64 = rng.gen();
                if r < cfg.deletion {
                    continue;
                }
                let word = if r < cfg.deletion + cfg.substitution {
                    wrong_word(&mut rng, cfg.vocab_size, right)
                } else {
                    right.clone()
                };
                alignments.push((j, mt.len()));
                mt.push(word);
                if rng.gen::<f64>() < cfg.insertion {
                    mt.push(target_word(rng.gen_range(0..cfg.vocab_size)));
                }
            }
            SentenceTriplet {
                source,
                mt,
                pe,
                alignments,
            }
        })
        .collect()
}

/// Labels every triplet and returns the QE samples with all gold fields.
pub fn label_corpus(triplets: &[SentenceTriplet]) -> Result<Vec<QeSample>, LabelError> {
    triplets
        .iter()
        .map(|t| {
            let l = label_triplet(t)?;
            Ok(QeSample {
                source: t.source.clone(),
                mt: t.mt.clone(),
                alignments: t.alignments.clone(),
                mt_tags: Some(l.tags.mt_tags),
                gap_tags: Some(l.tags.gap_tags),
                source_tags: Some(l.tags.source_tags),
                hter: Some(l.hter),
            })
        })
        .collect()
}

/// Samples whose MT has exactly `round(rate * len)` substituted words for
/// a per-sentence rate drawn uniformly from `[0, max_rate]`. The gold
/// sentence score is the realized substitution fraction and the MT tags
/// mark the substituted words.
pub fn rate_corpus(cfg: &SyntheticConfig, n: usize, max_rate: f64, seed: u64) -> Vec<QeSample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let source = random_source(&mut rng, cfg);
            let len = source.len();
            let rate = rng.gen_range(0.0..=max_rate);
            let k = ((rate * len as f64).round() as usize).min(len);
            let mut mt: Vec<String> = source.iter().map(|w| translate(w)).collect();
            let mut tags = vec![Tag::Ok; len];
            for i in sample(&mut rng, len, k).into_vec() {
                mt[i] = wrong_word(&mut rng, cfg.vocab_size, &mt[i]);
                tags[i] = Tag::Bad;
            }
            QeSample {
                alignments: (0..len).map(|i| (i, i)).collect(),
                source,
                mt,
                mt_tags: Some(tags),
                hter: Some(k as f64 / len as f64),
                ..Default::default()
            }
        })
        .collect()
}

/// Copy language: the target side repeats the source.
pub fn copy_corpus(vocab_size: usize, max_len: usize, n: usize, seed: u64) -> Vec<QeSample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let len = rng.gen_range(1..=max_len);
            let words: Vec<String> = (0..len).map(|_| format!("w{}", rng.gen_range(0..vocab_size))).collect();
            QeSample {
                alignments: (0..len).map(|i| (i, i)).collect(),
                source: words.clone(),
                mt: words,
                ..Default::default()
            }
        })
        .collect()
}

/// Writes `<prefix>.src`, `.mt`, `.pe` and `.align` into `dir`.
pub fn write_triplets(dir: &Path, prefix: &str, triplets: &[SentenceTriplet]) -> Result<(), DataError> {
    std::fs::create_dir_all(dir).map_err(|e| DataError::io(dir, e))?;
    let join = |f: fn(&SentenceTriplet) -> &Vec<String>| triplets.iter().map(move |t| f(t).join(" "));
    write_lines(&dir.join(format!("{prefix}.src")), join(|t| &t.source))?;
    write_lines(&dir.join(format!("{prefix}.mt")), join(|t| &t.mt))?;
    write_lines(&dir.join(format!("{prefix}.pe")), join(|t| &t.pe))?;
    write_lines(
        &dir.join(format!("{prefix}.align")),
        triplets.iter().map(|t| format_alignments(&t.alignments)),
    )
}

/// Writes `samples` as `<prefix>.src`, `.mt`, `.align` and whichever of
/// `.mt_tags`, `.gap_tags`, `.src_tags` and `.hter` every sample has, and
/// returns the file set.
pub fn write_samples(dir: &Path, prefix: &str, samples: &[QeSample]) -> Result<CorpusFiles, DataError> {
    std::fs::create_dir_all(dir).map_err(|e| DataError::io(dir, e))?;
    let path = |ext: &str| dir.join(format!("{prefix}.{ext}"));
    let mut files = CorpusFiles {
        source: Some(path("src")),
        mt: Some(path("mt")),
        alignments: Some(path("align")),
        ..Default::default()
    };
    write_lines(&path("src"), samples.iter().map(|s| s.source.join(" ")))?;
    write_lines(&path("mt"), samples.iter().map(|s| s.mt.join(" ")))?;
    write_lines(&path("align"), samples.iter().map(|s| format_alignments(&s.alignments)))?;
    let streams: [(&str, fn(&QeSample) -> &Option<Vec<Tag>>, &mut Option<PathBuf>); 3] = [
        ("mt_tags", |s| &s.mt_tags, &mut files.mt_tags),
        ("gap_tags", |s| &s.gap_tags, &mut files.gap_tags),
        ("src_tags", |s| &s.source_tags, &mut files.source_tags),
    ];
    for (ext, get, slot) in streams {
        let tags: Option<Vec<Vec<Tag>>> = samples.iter().map(|s| get(s).clone()).collect();
        if let Some(tags) = tags {
            write_tags(&path(ext), &tags)?;
            *slot = Some(path(ext));
        }
    }
    if let Some(h) = samples.iter().map(|s| s.hter).collect::<Option<Vec<f64>>>() {
        write_scores(&path("hter"), &h)?;
        files.hter = Some(path("hter"));
    }
    Ok(files)
}
