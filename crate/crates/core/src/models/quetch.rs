use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::layers::{Embedding, Linear};
use super::windows::word_windows;
use super::word::WordTagger;
use super::ModelError;
use crate::data::Batch;
use crate::numerics::{Graph, NodeId, ParamStore};
use crate::tags::Stream;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuetchConfig {
    pub task: Stream,
    #[serde(default = "default_window")]
    pub window: usize,
    #[serde(default = "default_embedding")]
    pub embedding_dim: usize,
    #[serde(default = "default_hidden")]
    pub hidden_dim: usize,
}

fn default_window() -> usize {
    3
}
fn default_embedding() -> usize {
    64
}
fn default_hidden() -> usize {
    128
}

impl QuetchConfig {
    pub fn new(task: Stream) -> Self {
        Self {
            task,
            window: default_window(),
            embedding_dim: default_embedding(),
            hidden_dim: default_hidden(),
        }
    }
}

pub(crate) fn check_window(w: usize) -> Result<(), ModelError> {
    if w < 1 || w.is_multiple_of(2) {
        return Err(ModelError::InvalidWindow(w));
    }
    Ok(())
}

/// Window MLP: concatenated target and aligned-source embeddings, one tanh
/// hidden layer, two-way softmax.
#[derive(Debug, Clone)]
pub struct QuetchModel {
    pub config: QuetchConfig,
    store: ParamStore,
    source_emb: Embedding,
    target_emb: Embedding,
    hidden: Linear,
    output: Linear,
}

impl QuetchModel {
    pub fn new(config: QuetchConfig, source_vocab: usize, target_vocab: usize, seed: u64) -> Result<Self, ModelError> {
        check_window(config.window)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let d = config.embedding_dim;
        let source_emb = Embedding::new(&mut store, "source_emb", source_vocab, d, &mut rng);
        let target_emb = Embedding::new(&mut store, "target_emb", target_vocab, d, &mut rng);
        let w = config.window;
        let input = (super::windows::main_width(config.task, w) + w) * d;
        let hidden = Linear::new(&mut store, "hidden", input, config.hidden_dim, &mut rng);
        let output = Linear::new(&mut store, "output", config.hidden_dim, 2, &mut rng);
        Ok(Self {
            config,
            store,
            source_emb,
            target_emb,
            hidden,
            output,
        })
    }

    pub fn store_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }
}

/// Embeds the main and aligned windows with the tables matching their
/// languages and concatenates them: `[positions, (wm + wa) * dim]`.
pub(crate) fn embed_windows(
    g: &mut Graph<'_>,
    batch: &Batch,
    row: usize,
    task: Stream,
    window: usize,
    source_emb: &Embedding,
    target_emb: &Embedding,
) -> Option<NodeId> {
    let w = word_windows(batch, row, task, window);
    if w.positions == 0 {
        return None;
    }
    let (main_emb, aligned_emb) = match task {
        Stream::Source => (source_emb, target_emb),
        _ => (target_emb, source_emb),
    };
    let main = main_emb.lookup_windows(g, &w.main, w.main_width);
    let aligned = aligned_emb.lookup_windows(g, &w.aligned, w.aligned_width);
    Some(g.concat_cols(&[main, aligned]))
}

impl WordTagger for QuetchModel {
    fn task(&self) -> Stream {
        self.config.task
    }

    fn store(&self) -> &ParamStore {
        &self.store
    }

    fn sentence_logits(&self, g: &mut Graph<'_>, batch: &Batch, row: usize) -> Result<Option<NodeId>, ModelError> {
        let Some(x) = embed_windows(g, batch, row, self.config.task, self.config.window, &self.source_emb, &self.target_emb)
        else {
            return Ok(None);
        };
        let h = self.hidden.forward(g, x);
        let h = g.tanh(h);
        Ok(Some(self.output.forward(g, h)))
    }
}
