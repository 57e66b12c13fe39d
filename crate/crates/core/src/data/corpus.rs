use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::DataError;
use crate::tags::Tag;

/// Source token index and MT token index, both 0-based.
pub type AlignmentPair = (usize, usize);

#[derive(Debug, Clone, PartialEq)]
pub struct SentenceTriplet {
    pub source: Vec<String>,
    pub mt: Vec<String>,
    pub pe: Vec<String>,
    pub alignments: Vec<AlignmentPair>,
}

/// One training or evaluation example.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct QeSample {
    pub source: Vec<String>,
    pub mt: Vec<String>,
    pub alignments: Vec<AlignmentPair>,
    pub mt_tags: Option<Vec<Tag>>,
    pub gap_tags: Option<Vec<Tag>>,
    pub source_tags: Option<Vec<Tag>>,
    pub hter: Option<f64>,
}

impl QeSample {
    pub fn new(source: &str, mt: &str) -> Self {
        Self {
            source: tokenize(source),
            mt: tokenize(mt),
            ..Default::default()
        }
    }
}

/// Paths of the parallel files that make up a corpus. Any subset may be
/// present; loaders check for what they need.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusFiles {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mt: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pe: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alignments: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mt_tags: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gap_tags: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_tags: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hter: Option<PathBuf>,
}

impl CorpusFiles {
    /// Rewrites relative paths against `base`.
    pub fn resolve(&mut self, base: &Path) {
        for p in [
            &mut self.source,
            &mut self.mt,
            &mut self.pe,
            &mut self.alignments,
            &mut self.mt_tags,
            &mut self.gap_tags,
            &mut self.source_tags,
            &mut self.hter,
        ]
        .into_iter()
        .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
    }
}

/// Whitespace tokenization; files are expected to be pre-tokenized.
pub fn tokenize(line: &str) -> Vec<String> {
    line.split_whitespace().map(String::from).collect()
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum AlignmentError {
    #[error("malformed alignment token {0:?} (expected i-j)")]
    Malformed(String),
    #[error("alignment {0}-{1} out of range for {2} source / {3} MT tokens")]
    OutOfRange(usize, usize, usize, usize),
}

/// Parses a line of `i-j` pairs (source index, MT index), checking both
/// indices against the sentence lengths. Order and duplicates are kept.
pub fn parse_alignments(line: &str, src_len: usize, mt_len: usize) -> Result<Vec<AlignmentPair>, AlignmentError> {
    line.split_whitespace()
        .map(|tok| {
            let (a, b) = tok
                .split_once('-')
                .ok_or_else(|| AlignmentError::Malformed(tok.to_string()))?;
            let (s, t): (usize, usize) = match (a.parse(), b.parse()) {
                (Ok(s), Ok(t)) => (s, t),
                _ => return Err(AlignmentError::Malformed(tok.to_string())),
            };
            if s >= src_len || t >= mt_len {
                return Err(AlignmentError::OutOfRange(s, t, src_len, mt_len));
            }
            Ok((s, t))
        })
        .collect()
}

pub fn format_alignments(pairs: &[AlignmentPair]) -> String {
    pairs.iter().map(|(s, t)| format!("{s}-{t}")).collect::<Vec<_>>().join(" ")
}

pub(crate) fn read_lines(path: &Path) -> Result<Vec<String>, DataError> {
    let text = std::fs::read_to_string(path).map_err(|e| DataError::io(path, e))?;
    Ok(text.lines().map(|l| l.trim_end_matches('\r').to_string()).collect())
}

fn require<'a>(p: &'a Option<PathBuf>, what: &'static str) -> Result<&'a Path, DataError> {
    p.as_deref().ok_or(DataError::MissingFile(what))
}

fn read_parallel(path: &Path, expected: usize) -> Result<Vec<String>, DataError> {
    let lines = read_lines(path)?;
    if lines.len() != expected {
        return Err(DataError::LineCount {
            path: path.to_path_buf(),
            expected,
            found: lines.len(),
        });
    }
    Ok(lines)
}

fn read_tokens(path: &Path, max_len: usize) -> Result<Vec<Vec<String>>, DataError> {
    read_lines(path)?
        .iter()
        .enumerate()
        .map(|(i, l)| {
            let toks = tokenize(l);
            if toks.len() > max_len {
                return Err(DataError::TooLong {
                    path: path.to_path_buf(),
                    line: i + 1,
                    len: toks.len(),
                    max: max_len,
                });
            }
            Ok(toks)
        })
        .collect()
}

fn read_tokens_parallel(path: &Path, expected: usize, max_len: usize) -> Result<Vec<Vec<String>>, DataError> {
    let toks = read_tokens(path, max_len)?;
    if toks.len() != expected {
        return Err(DataError::LineCount {
            path: path.to_path_buf(),
            expected,
            found: toks.len(),
        });
    }
    Ok(toks)
}

/// Parses a tag line, checking its arity.
pub fn parse_tag_line(line: &str, expected: usize) -> Result<Vec<Tag>, TagLineError> {
    let tags = line
        .split_whitespace()
        .map(|t| t.parse::<Tag>().map_err(|e| TagLineError::Unknown(e.0)))
        .collect::<Result<Vec<_>, _>>()?;
    if tags.len() != expected {
        return Err(TagLineError::Count {
            expected,
            found: tags.len(),
        });
    }
    Ok(tags)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TagLineError {
    Unknown(String),
    Count { expected: usize, found: usize },
}

fn read_tags(path: &Path, lengths: impl ExactSizeIterator<Item = usize>) -> Result<Vec<Vec<Tag>>, DataError> {
    let lines = read_parallel(path, lengths.len())?;
    lines
        .iter()
        .zip(lengths)
        .enumerate()
        .map(|(i, (l, n))| {
            parse_tag_line(l, n).map_err(|e| match e {
                TagLineError::Unknown(tag) => DataError::BadTag {
                    path: path.to_path_buf(),
                    line: i + 1,
                    tag,
                },
                TagLineError::Count { expected, found } => DataError::TagCount {
                    path: path.to_path_buf(),
                    line: i + 1,
                    expected,
                    found,
                },
            })
        })
        .collect()
}

pub(crate) fn read_scores(path: &Path, expected: Option<usize>) -> Result<Vec<f64>, DataError> {
    let lines = match expected {
        Some(n) => read_parallel(path, n)?,
        None => read_lines(path)?,
    };
    lines
        .iter()
        .enumerate()
        .map(|(i, l)| {
            let v: f64 = l.trim().parse().map_err(|_| DataError::BadScore {
                path: path.to_path_buf(),
                line: i + 1,
                value: l.clone(),
            })?;
            if !(0.0..=1.0).contains(&v) {
                return Err(DataError::BadScore {
                    path: path.to_path_buf(),
                    line: i + 1,
                    value: l.clone(),
                });
            }
            Ok(v)
        })
        .collect()
}

fn read_alignment_file(path: &Path, source: &[Vec<String>], mt: &[Vec<String>]) -> Result<Vec<Vec<AlignmentPair>>, DataError> {
    let lines = read_parallel(path, mt.len())?;
    lines
        .iter()
        .enumerate()
        .map(|(i, l)| {
            parse_alignments(l, source[i].len(), mt[i].len()).map_err(|source| DataError::Alignment {
                path: path.to_path_buf(),
                line: i + 1,
                source,
            })
        })
        .collect()
}

/// Loads source + MT and whatever optional gold files are configured.
pub fn load_corpus(files: &CorpusFiles, max_len: usize) -> Result<Vec<QeSample>, DataError> {
    let mt_path = require(&files.mt, "mt")?;
    let mt = read_tokens(mt_path, max_len)?;
    let n = mt.len();
    let source = read_tokens_parallel(require(&files.source, "source")?, n, max_len)?;

    let alignments = match &files.alignments {
        Some(p) => read_alignment_file(p, &source, &mt)?,
        None => vec![Vec::new(); n],
    };
    let mt_tags = files
        .mt_tags
        .as_deref()
        .map(|p| read_tags(p, mt.iter().map(Vec::len)))
        .transpose()?;
    let gap_tags = files
        .gap_tags
        .as_deref()
        .map(|p| read_tags(p, mt.iter().map(|s| s.len() + 1)))
        .transpose()?;
    let source_tags = files
        .source_tags
        .as_deref()
        .map(|p| read_tags(p, source.iter().map(Vec::len)))
        .transpose()?;
    let hter = files.hter.as_deref().map(|p| read_scores(p, Some(n))).transpose()?;

    let mut out = Vec::with_capacity(n);
    for (i, (src, mt)) in source.into_iter().zip(mt).enumerate() {
        out.push(QeSample {
            source: src,
            mt,
            alignments: alignments[i].clone(),
            mt_tags: mt_tags.as_ref().map(|t| t[i].clone()),
            gap_tags: gap_tags.as_ref().map(|t| t[i].clone()),
            source_tags: source_tags.as_ref().map(|t| t[i].clone()),
            hter: hter.as_ref().map(|h| h[i]),
        });
    }
    Ok(out)
}

/// Loads source/MT/PE triplets for label generation. Alignments are
/// optional.
pub fn load_triplets(files: &CorpusFiles, max_len: usize) -> Result<Vec<SentenceTriplet>, DataError> {
    let mt = read_tokens(require(&files.mt, "mt")?, max_len)?;
    let n = mt.len();
    let pe = read_tokens_parallel(require(&files.pe, "pe")?, n, max_len)?;
    let source = match &files.source {
        Some(p) => read_tokens_parallel(p, n, max_len)?,
        None => vec![Vec::new(); n],
    };
    let alignments = match &files.alignments {
        Some(p) => read_alignment_file(p, &source, &mt)?,
        None => vec![Vec::new(); n],
    };
    Ok(source
        .into_iter()
        .zip(mt)
        .zip(pe)
        .zip(alignments)
        .map(|(((source, mt), pe), alignments)| SentenceTriplet {
            source,
            mt,
            pe,
            alignments,
        })
        .collect())
}

/// Writes one whitespace-joined tag line per sentence.
pub fn write_tags(path: &Path, tags: &[Vec<Tag>]) -> Result<(), DataError> {
    let mut out = String::new();
    for line in tags {
        let strs: Vec<&str> = line.iter().map(|t| t.as_str()).collect();
        out.push_str(&strs.join(" "));
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|e| DataError::io(path, e))
}

pub fn write_scores(path: &Path, scores: &[f64]) -> Result<(), DataError> {
    let mut out = String::new();
    for s in scores {
        out.push_str(&format!("{s:.6}\n"));
    }
    std::fs::write(path, out).map_err(|e| DataError::io(path, e))
}

pub fn write_lines(path: &Path, lines: impl IntoIterator<Item = String>) -> Result<(), DataError> {
    let mut out = String::new();
    for l in lines {
        out.push_str(&l);
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|e| DataError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::fs;

    #[test]
    fn alignment_format() {
        assert_eq!(parse_alignments("0-0 1-2", 2, 3).unwrap(), vec![(0, 0), (1, 2)]);
        assert_eq!(parse_alignments("", 0, 0).unwrap(), vec![]);
        assert_eq!(parse_alignments("1-1 1-1", 2, 2).unwrap(), vec![(1, 1), (1, 1)]);
    }

    #[test]
    fn alignment_errors() {
        assert!(matches!(parse_alignments("2-0", 2, 3), Err(AlignmentError::OutOfRange(2, 0, 2, 3))));
        assert!(matches!(parse_alignments("0:1", 2, 3), Err(AlignmentError::Malformed(_))));
        assert!(matches!(parse_alignments("0-x", 2, 3), Err(AlignmentError::Malformed(_))));
    }

    fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
        let p = dir.join(name);
        fs::write(&p, text).unwrap();
        p
    }

    #[test]
    fn loads_parallel_files() {
        let d = tempfile::tempdir().unwrap();
        let files = CorpusFiles {
            source: Some(write(d.path(), "src", "a\nb c\nd\n")),
            mt: Some(write(d.path(), "mt", "x\ny z\nw\n")),
            gap_tags: Some(write(d.path(), "gap", "OK OK\nOK BAD OK\nOK OK\n")),
            ..Default::default()
        };
        let s = load_corpus(&files, 200).unwrap();
        assert_eq!(s.len(), 3);
        assert_eq!(s[1].gap_tags.as_ref().unwrap()[1], Tag::Bad);
    }

    #[test]
    fn wrong_tag_count_names_line() {
        let d = tempfile::tempdir().unwrap();
        let files = CorpusFiles {
            source: Some(write(d.path(), "src", "s\n")),
            mt: Some(write(d.path(), "mt", "a b\n")),
            mt_tags: Some(write(d.path(), "tags", "OK OK BAD\n")),
            ..Default::default()
        };
        let err = load_corpus(&files, 200).unwrap_err();
        assert!(matches!(err, DataError::TagCount { line: 1, expected: 2, found: 3, .. }), "{err}");
        assert!(err.to_string().contains("expected 2 tags"));
    }

    #[test]
    fn line_count_mismatch() {
        let d = tempfile::tempdir().unwrap();
        let files = CorpusFiles {
            source: Some(write(d.path(), "src", "a\nb\n")),
            mt: Some(write(d.path(), "mt", "a\nb\nc\n")),
            ..Default::default()
        };
        assert!(matches!(load_corpus(&files, 200), Err(DataError::LineCount { expected: 3, found: 2, .. })));
    }

    #[test]
    fn long_sentences_are_rejected() {
        let d = tempfile::tempdir().unwrap();
        let files = CorpusFiles {
            source: Some(write(d.path(), "src", "a\n")),
            mt: Some(write(d.path(), "mt", "a b c d\n")),
            ..Default::default()
        };
        assert!(matches!(load_corpus(&files, 3), Err(DataError::TooLong { line: 1, len: 4, max: 3, .. })));
    }

    #[test]
    fn bad_tag_and_score() {
        let d = tempfile::tempdir().unwrap();
        let files = CorpusFiles {
            source: Some(write(d.path(), "src", "a\n")),
            mt: Some(write(d.path(), "mt", "a\n")),
            mt_tags: Some(write(d.path(), "tags", "MAYBE\n")),
            ..Default::default()
        };
        assert!(matches!(load_corpus(&files, 10), Err(DataError::BadTag { .. })));
        let files = CorpusFiles {
            mt_tags: None,
            hter: Some(write(d.path(), "hter", "1.5\n")),
            ..files
        };
        assert!(matches!(load_corpus(&files, 10), Err(DataError::BadScore { .. })));
    }
}
