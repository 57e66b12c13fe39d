use crate::data::{Batch, Padded};
use crate::numerics::{softmax_rows, Graph, NodeId, ParamStore};
use crate::tags::{Stream, Tag};

use super::ModelError;

/// A model that scores one tag stream with OK/BAD logits per position.
pub trait WordTagger {
    fn task(&self) -> Stream;

    fn store(&self) -> &ParamStore;

    /// `[positions, 2]` logits for sentence `row` of `batch`, or `None` when
    /// the sentence has no positions for this task.
    fn sentence_logits(&self, g: &mut Graph<'_>, batch: &Batch, row: usize) -> Result<Option<NodeId>, ModelError>;
}

pub(crate) fn gold_for(batch: &Batch, stream: Stream) -> Result<&Padded<Tag>, ModelError> {
    match stream {
        Stream::Mt => batch.mt_tags.as_ref(),
        Stream::Gap => batch.gap_tags.as_ref(),
        Stream::Source => batch.source_tags.as_ref(),
    }
    .ok_or(ModelError::MissingGold(stream))
}

/// Mean cross-entropy over every labeled position of the batch. Positions
/// with a BAD gold label are weighted by `bad_weight`. Returns the loss and
/// the number of contributing positions.
pub fn word_loss<M: WordTagger + ?Sized>(
    model: &M,
    g: &mut Graph<'_>,
    batch: &Batch,
    bad_weight: f64,
) -> Result<(NodeId, usize), ModelError> {
    let gold = gold_for(batch, model.task())?;
    let mut logits = Vec::new();
    let mut targets = Vec::new();
    for row in 0..batch.len() {
        if let Some(l) = model.sentence_logits(g, batch, row)? {
            let tags = gold.row(row);
            if g.shape(l).0 != tags.len() {
                return Err(ModelError::LengthMismatch {
                    expected: tags.len(),
                    found: g.shape(l).0,
                });
            }
            logits.push(l);
            targets.extend(tags.iter().map(|t| t.class()));
        }
    }
    if logits.is_empty() {
        return Ok((g.matrix(1, 1, vec![0.0]), 0));
    }
    let all = g.concat_rows(&logits);
    let weights: Vec<f64> = targets.iter().map(|&c| if c == 1 { bad_weight } else { 1.0 }).collect();
    let ce = g.cross_entropy(all, &targets, &weights);
    let n = targets.len();
    Ok((g.scale(ce, 1.0 / n as f64), n))
}

/// Per-position `[p_ok, p_bad]` for every sentence in the batch.
pub fn word_distributions<M: WordTagger + ?Sized>(model: &M, batch: &Batch) -> Result<Vec<Vec<[f64; 2]>>, ModelError> {
    let mut g = Graph::new(model.store());
    let mut out = Vec::with_capacity(batch.len());
    for row in 0..batch.len() {
        match model.sentence_logits(&mut g, batch, row)? {
            Some(l) => {
                let p = softmax_rows(g.value(l), 2);
                out.push(p.chunks(2).map(|c| [c[0], c[1]]).collect());
            }
            None => out.push(Vec::new()),
        }
    }
    Ok(out)
}
