//! Gold word tags and HTER from post-edits.
//!
//! MT and PE are aligned with a unit-cost Levenshtein alignment over
//! tokens (no block shifts). Substituted and deleted MT tokens are BAD, a
//! gap is BAD when at least one PE token is inserted there, and a source
//! token is BAD when it is aligned to a BAD MT token.

use crate::data::{AlignmentPair, SentenceTriplet};
use crate::tags::Tag;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EditOp {
    Match { mt: usize, pe: usize },
    Substitute { mt: usize, pe: usize },
    Delete { mt: usize },
    Insert { pe: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct EditScript {
    pub ops: Vec<EditOp>,
}

impl EditScript {
    pub fn edit_count(&self) -> usize {
        self.ops.iter().filter(|op| !matches!(op, EditOp::Match { .. })).count()
    }

    /// Rebuilds the post-edit: matched tokens are taken from `mt`,
    /// substituted and inserted ones from `pe`.
    pub fn apply<S: AsRef<str>>(&self, mt: &[S], pe: &[S]) -> Vec<String> {
        self.ops
            .iter()
            .filter_map(|op| match *op {
                EditOp::Match { mt: i, .. } => Some(mt[i].as_ref().to_string()),
                EditOp::Substitute { pe: j, .. } | EditOp::Insert { pe: j } => Some(pe[j].as_ref().to_string()),
                EditOp::Delete { .. } => None,
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum LabelError {
    #[error("edit script does not cover MT tokens 0..{expected} in order (at op {op})")]
    InconsistentScript { expected: usize, op: usize },
    #[error("alignment {0}-{1} out of range for {2} source / {3} MT tokens")]
    AlignmentOutOfRange(usize, usize, usize, usize),
}

/// Minimum-edit alignment of `mt` to `pe` with unit costs.
///
/// When several scripts have the same cost the backtrace prefers, at each
/// step, match over substitution over deletion over insertion.
pub fn edit_alignment<S: AsRef<str>>(mt: &[S], pe: &[S]) -> EditScript {
    let (n, m) = (mt.len(), pe.len());
    let w = m + 1;
    let mut d = vec![0usize; (n + 1) * w];
    for i in 0..=n {
        d[i * w] = i;
    }
    for j in 0..=m {
        d[j] = j;
    }
    for i in 1..=n {
        for j in 1..=m {
            let same = mt[i - 1].as_ref() == pe[j - 1].as_ref();
            let diag = d[(i - 1) * w + j - 1] + usize::from(!same);
            let del = d[(i - 1) * w + j] + 1;
            let ins = d[i * w + j - 1] + 1;
            d[i * w + j] = diag.min(del).min(ins);
        }
    }

    let mut ops = Vec::with_capacity(n.max(m));
    let (mut i, mut j) = (n, m);
    while i > 0 || j > 0 {
        let here = d[i * w + j];
        if i > 0 && j > 0 {
            let diag = d[(i - 1) * w + j - 1];
            if mt[i - 1].as_ref() == pe[j - 1].as_ref() && diag == here {
                ops.push(EditOp::Match { mt: i - 1, pe: j - 1 });
                i -= 1;
                j -= 1;
                continue;
            }
            if diag + 1 == here {
                ops.push(EditOp::Substitute { mt: i - 1, pe: j - 1 });
                i -= 1;
                j -= 1;
                continue;
            }
        }
        if i > 0 && d[(i - 1) * w + j] + 1 == here {
            ops.push(EditOp::Delete { mt: i - 1 });
            i -= 1;
        } else {
            ops.push(EditOp::Insert { pe: j - 1 });
            j -= 1;
        }
    }
    ops.reverse();
    EditScript { ops }
}

/// MT and gap tags implied by an edit script over an `n`-token MT.
pub fn tags_from_edits(script: &EditScript, n: usize) -> Result<(Vec<Tag>, Vec<Tag>), LabelError> {
    let mut mt_tags = vec![Tag::Ok; n];
    let mut gap_tags = vec![Tag::Ok; n + 1];
    let mut consumed = 0;
    for (k, op) in script.ops.iter().enumerate() {
        match *op {
            EditOp::Match { mt, .. } | EditOp::Substitute { mt, .. } | EditOp::Delete { mt } => {
                if mt != consumed || mt >= n {
                    return Err(LabelError::InconsistentScript { expected: n, op: k });
                }
                if !matches!(op, EditOp::Match { .. }) {
                    mt_tags[mt] = Tag::Bad;
                }
                consumed += 1;
            }
            EditOp::Insert { .. } => gap_tags[consumed] = Tag::Bad,
        }
    }
    if consumed != n {
        return Err(LabelError::InconsistentScript {
            expected: n,
            op: script.ops.len(),
        });
    }
    Ok((mt_tags, gap_tags))
}

/// A source token is BAD iff it is aligned to at least one BAD MT token.
/// Unaligned source tokens are OK.
pub fn source_tags(src_len: usize, alignments: &[AlignmentPair], mt_tags: &[Tag]) -> Result<Vec<Tag>, LabelError> {
    let mut tags = vec![Tag::Ok; src_len];
    for &(s, t) in alignments {
        if s >= src_len || t >= mt_tags.len() {
            return Err(LabelError::AlignmentOutOfRange(s, t, src_len, mt_tags.len()));
        }
        if mt_tags[t] == Tag::Bad {
            tags[s] = Tag::Bad;
        }
    }
    Ok(tags)
}

/// Edits needed to turn `mt` into `pe`, divided by `|pe|`, capped at 1.
pub fn hter<S: AsRef<str>>(mt: &[S], pe: &[S]) -> f64 {
    hter_from_count(edit_alignment(mt, pe).edit_count(), mt.len(), pe.len())
}

pub(crate) fn hter_from_count(edits: usize, mt_len: usize, pe_len: usize) -> f64 {
    if pe_len == 0 {
        return if mt_len == 0 { 0.0 } else { 1.0 };
    }
    (edits as f64 / pe_len as f64).min(1.0)
}

/// All gold annotations for one triplet.
#[derive(Debug, Clone, PartialEq)]
pub struct TagSequence {
    pub mt_tags: Vec<Tag>,
    pub gap_tags: Vec<Tag>,
    pub source_tags: Vec<Tag>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Labels {
    pub tags: TagSequence,
    pub hter: f64,
    pub edits: usize,
}

pub fn label_triplet(t: &SentenceTriplet) -> Result<Labels, LabelError> {
    let script = edit_alignment(&t.mt, &t.pe);
    let (mt_tags, gap_tags) = tags_from_edits(&script, t.mt.len())?;
    let source_tags = source_tags(t.source.len(), &t.alignments, &mt_tags)?;
    let edits = script.edit_count();
    Ok(Labels {
        tags: TagSequence {
            mt_tags,
            gap_tags,
            source_tags,
        },
        hter: hter_from_count(edits, t.mt.len(), t.pe.len()),
        edits,
    })
}
