use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::layers::{BiGru, Embedding, Linear};
use super::quetch::{check_window, embed_windows};
use super::word::WordTagger;
use super::ModelError;
use crate::data::Batch;
use crate::numerics::{Graph, NodeId, ParamStore};
use crate::tags::Stream;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NuqeConfig {
    pub task: Stream,
    #[serde(default = "default_window")]
    pub window: usize,
    #[serde(default = "default_embedding")]
    pub embedding_dim: usize,
    #[serde(default = "default_hidden")]
    pub hidden_dim: usize,
    #[serde(default = "default_rnn")]
    pub rnn_dim: usize,
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
fn default_rnn() -> usize {
    64
}

impl NuqeConfig {
    pub fn new(task: Stream) -> Self {
        Self {
            task,
            window: default_window(),
            embedding_dim: default_embedding(),
            hidden_dim: default_hidden(),
            rnn_dim: default_rnn(),
        }
    }
}

/// Embeddings, two ReLU feed-forward layers, a bidirectional GRU, two more
/// ReLU feed-forward layers and a two-way output.
#[derive(Debug, Clone)]
pub struct NuqeModel {
    pub config: NuqeConfig,
    store: ParamStore,
    source_emb: Embedding,
    target_emb: Embedding,
    ff1: [Linear; 2],
    gru: BiGru,
    ff2: [Linear; 2],
    output: Linear,
}

impl NuqeModel {
    pub fn new(config: NuqeConfig, source_vocab: usize, target_vocab: usize, seed: u64) -> Result<Self, ModelError> {
        check_window(config.window)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let (d, h, r) = (config.embedding_dim, config.hidden_dim, config.rnn_dim);
        let source_emb = Embedding::new(&mut store, "source_emb", source_vocab, d, &mut rng);
        let target_emb = Embedding::new(&mut store, "target_emb", target_vocab, d, &mut rng);
        let w = config.window;
        let input = (super::windows::main_width(config.task, w) + w) * d;
        let ff1 = [
            Linear::new(&mut store, "ff1.0", input, h, &mut rng),
            Linear::new(&mut store, "ff1.1", h, h, &mut rng),
        ];
        let gru = BiGru::new(&mut store, "gru", h, r, &mut rng);
        let ff2 = [
            Linear::new(&mut store, "ff2.0", gru.out_dim(), h, &mut rng),
            Linear::new(&mut store, "ff2.1", h, h, &mut rng),
        ];
        let output = Linear::new(&mut store, "output", h, 2, &mut rng);
        Ok(Self {
            config,
            store,
            source_emb,
            target_emb,
            ff1,
            gru,
            ff2,
            output,
        })
    }

    pub fn store_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }
}

impl WordTagger for NuqeModel {
    fn task(&self) -> Stream {
        self.config.task
    }

    fn store(&self) -> &ParamStore {
        &self.store
    }

    fn sentence_logits(&self, g: &mut Graph<'_>, batch: &Batch, row: usize) -> Result<Option<NodeId>, ModelError> {
        let Some(mut x) = embed_windows(g, batch, row, self.config.task, self.config.window, &self.source_emb, &self.target_emb)
        else {
            return Ok(None);
        };
        for l in &self.ff1 {
            let h = l.forward(g, x);
            x = g.relu(h);
        }
        x = self.gru.forward(g, x);
        for l in &self.ff2 {
            let h = l.forward(g, x);
            x = g.relu(h);
        }
        Ok(Some(self.output.forward(g, x)))
    }
}
