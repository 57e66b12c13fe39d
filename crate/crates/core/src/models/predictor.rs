//! Target-word predictor and the quality estimator stacked on top of it.
//!
//! The predictor encodes the source with a bidirectional LSTM and reads the
//! target with two unidirectional LSTMs, one left-to-right from a start
//! symbol and one right-to-left from a stop symbol. For target position
//! `i` the query is the left state before `t_i` joined with the right state
//! after `t_{i+1}`; it attends over the source states, the query and the
//! attended context go through a tanh layer, and a softmax over the target
//! vocabulary follows. Nothing at position `i` reads `t_i`.
//!
//! The estimator consumes, per target token, the predictor's pre-softmax
//! hidden layer plus both LSTM states after `t_i`, runs a bidirectional
//! LSTM over them and predicts OK/BAD per token and a sentence score in
//! `[0, 1]`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::layers::{BiLstm, Embedding, Linear, Lstm};
use super::word::gold_for;
use super::ModelError;
use crate::data::{Batch, START, STOP};
use crate::numerics::{softmax_rows, Graph, NodeId, ParamId, ParamStore};
use crate::tags::Stream;

pub const PREDICTOR_PREFIX: &str = "predictor.";

/// Which side the predictor reads as its target.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    /// Predict MT tokens from the source.
    #[default]
    Forward,
    /// Predict source tokens from the MT.
    Reverse,
}

impl Direction {
    /// The tag stream an estimator on top of this direction labels.
    pub fn stream(self) -> Stream {
        match self {
            Direction::Forward => Stream::Mt,
            Direction::Reverse => Stream::Source,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredictorConfig {
    #[serde(default)]
    pub direction: Direction,
    #[serde(default = "default_embedding")]
    pub embedding_dim: usize,
    #[serde(default = "default_hidden")]
    pub hidden_dim: usize,
    #[serde(default = "default_hidden")]
    pub out_dim: usize,
}

fn default_embedding() -> usize {
    64
}
fn default_hidden() -> usize {
    128
}

impl Default for PredictorConfig {
    fn default() -> Self {
        Self {
            direction: Direction::Forward,
            embedding_dim: default_embedding(),
            hidden_dim: default_hidden(),
            out_dim: default_hidden(),
        }
    }
}

/// Graph nodes produced for one sentence.
#[derive(Debug, Clone, Copy)]
pub struct PredictorOutputs {
    /// `[N, V]` target-vocabulary logits.
    pub logits: NodeId,
    /// `[N, out_dim]` layer right before the softmax.
    pub hidden: NodeId,
    /// `[N, H]` left-to-right state after reading `t_i`.
    pub l2r_after: NodeId,
    /// `[N, H]` right-to-left state after reading `t_i`.
    pub r2l_after: NodeId,
    /// `[N, S + 1]` attention over source states (incl. the stop symbol).
    pub attention: NodeId,
}

/// Predictor layers. Parameters live in whichever store built it, under
/// [`PREDICTOR_PREFIX`].
#[derive(Debug, Clone)]
pub struct Predictor {
    pub config: PredictorConfig,
    source_vocab: usize,
    target_vocab: usize,
    source_emb: Embedding,
    target_emb: Embedding,
    encoder: BiLstm,
    l2r: Lstm,
    r2l: Lstm,
    attention: ParamId,
    combine: Linear,
    vocab_out: Linear,
}

impl Predictor {
    /// `source_vocab`/`target_vocab` are from the predictor's point of view:
    /// a reverse predictor reads MT as its source.
    pub fn new(store: &mut ParamStore, config: PredictorConfig, source_vocab: usize, target_vocab: usize, rng: &mut ChaCha8Rng) -> Self {
        let p = PREDICTOR_PREFIX;
        let (d, h, o) = (config.embedding_dim, config.hidden_dim, config.out_dim);
        let source_emb = Embedding::new(store, &format!("{p}source_emb"), source_vocab, d, rng);
        let target_emb = Embedding::new(store, &format!("{p}target_emb"), target_vocab, d, rng);
        let encoder = BiLstm::new(store, &format!("{p}encoder"), d, h, rng);
        let l2r = Lstm::new(store, &format!("{p}l2r"), d, h, rng);
        let r2l = Lstm::new(store, &format!("{p}r2l"), d, h, rng);
        let attention = store.uniform(&format!("{p}attention"), &[2 * h, 2 * h], 2 * h, rng);
        let combine = Linear::new(store, &format!("{p}combine"), 4 * h, o, rng);
        let vocab_out = Linear::new(store, &format!("{p}vocab_out"), o, target_vocab, rng);
        Self {
            config,
            source_vocab,
            target_vocab,
            source_emb,
            target_emb,
            encoder,
            l2r,
            r2l,
            attention,
            combine,
            vocab_out,
        }
    }

    pub fn direction(&self) -> Direction {
        self.config.direction
    }

    pub fn vocab_sizes(&self) -> (usize, usize) {
        (self.source_vocab, self.target_vocab)
    }

    /// Per-token feature width handed to the estimator.
    pub fn feature_dim(&self) -> usize {
        self.config.out_dim + 2 * self.config.hidden_dim
    }

    /// (source ids, target ids) of batch row `row` for this direction.
    pub fn sides<'b>(&self, batch: &'b Batch, row: usize) -> (&'b [usize], &'b [usize]) {
        match self.config.direction {
            Direction::Forward => (batch.source.row(row), batch.mt.row(row)),
            Direction::Reverse => (batch.mt.row(row), batch.source.row(row)),
        }
    }

    /// Runs the predictor over one sentence pair. `None` for an empty target.
    pub fn run(&self, g: &mut Graph<'_>, source: &[usize], target: &[usize]) -> Option<PredictorOutputs> {
        let n = target.len();
        if n == 0 {
            return None;
        }
        let mut src_ids = source.to_vec();
        src_ids.push(STOP);
        let src = self.source_emb.lookup(g, &src_ids);
        let states = self.encoder.forward(g, src);

        let mut l2r_ids = Vec::with_capacity(n + 1);
        l2r_ids.push(START);
        l2r_ids.extend_from_slice(target);
        let mut r2l_ids = Vec::with_capacity(n + 1);
        r2l_ids.push(STOP);
        r2l_ids.extend(target.iter().rev());

        let l2r_in = self.target_emb.lookup(g, &l2r_ids);
        let left = self.l2r.forward(g, l2r_in);
        let r2l_in = self.target_emb.lookup(g, &r2l_ids);
        let right = self.r2l.forward(g, r2l_in);

        // left row p: read up to t_p (1-based), i.e. everything before t_{p+1}
        // right row k: read STOP, t_N .. t_{N-k+1}
        let before: Vec<usize> = (0..n).collect();
        let after_right_ctx: Vec<usize> = (0..n).map(|p| n - 1 - p).collect();
        let left_ctx = g.gather_rows(left, &before);
        let right_ctx = g.gather_rows(right, &after_right_ctx);
        let query = g.concat_cols(&[left_ctx, right_ctx]);

        let wa = g.param(self.attention);
        let keyed = g.matmul(query, wa);
        let states_t = g.transpose(states);
        let scores = g.matmul(keyed, states_t);
        let attention = g.softmax(scores);
        let context = g.matmul(attention, states);

        let joined = g.concat_cols(&[query, context]);
        let hidden = self.combine.forward(g, joined);
        let hidden = g.tanh(hidden);
        let logits = self.vocab_out.forward(g, hidden);

        let l2r_after = g.slice_rows(left, 1, n);
        let r2l_rows: Vec<usize> = (0..n).map(|p| n - p).collect();
        let r2l_after = g.gather_rows(right, &r2l_rows);
        Some(PredictorOutputs {
            logits,
            hidden,
            l2r_after,
            r2l_after,
            attention,
        })
    }

    /// `[N, feature_dim]` estimator inputs.
    pub fn features(&self, g: &mut Graph<'_>, out: &PredictorOutputs) -> NodeId {
        g.concat_cols(&[out.hidden, out.l2r_after, out.r2l_after])
    }

    /// Mean token cross-entropy over the batch and the number of tokens.
    pub fn loss(&self, g: &mut Graph<'_>, batch: &Batch) -> (NodeId, usize) {
        let mut logits = Vec::new();
        let mut targets = Vec::new();
        for row in 0..batch.len() {
            let (src, tgt) = self.sides(batch, row);
            if let Some(out) = self.run(g, src, tgt) {
                logits.push(out.logits);
                targets.extend_from_slice(tgt);
            }
        }
        if logits.is_empty() {
            return (g.matrix(1, 1, vec![0.0]), 0);
        }
        let all = g.concat_rows(&logits);
        let ce = g.cross_entropy(all, &targets, &vec![1.0; targets.len()]);
        let n = targets.len();
        (g.scale(ce, 1.0 / n as f64), n)
    }
}

/// A standalone predictor with its own parameters.
#[derive(Debug, Clone)]
pub struct PredictorModel {
    pub arch: Predictor,
    store: ParamStore,
}

impl PredictorModel {
    pub fn new(config: PredictorConfig, source_vocab: usize, target_vocab: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let arch = Predictor::new(&mut store, config, source_vocab, target_vocab, &mut rng);
        Self { arch, store }
    }

    pub fn store(&self) -> &ParamStore {
        &self.store
    }

    pub fn store_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    pub fn loss(&self, g: &mut Graph<'_>, batch: &Batch) -> (NodeId, usize) {
        self.arch.loss(g, batch)
    }

    /// `[N, V]` row-stochastic matrices, one per sentence (empty for an
    /// empty target).
    pub fn distributions(&self, batch: &Batch) -> Vec<Vec<Vec<f64>>> {
        let mut g = Graph::new(&self.store);
        let v = self.arch.target_vocab;
        (0..batch.len())
            .map(|row| {
                let (s, t) = self.arch.sides(batch, row);
                match self.arch.run(&mut g, s, t) {
                    Some(out) => softmax_rows(g.value(out.logits), v).chunks(v).map(<[f64]>::to_vec).collect(),
                    None => Vec::new(),
                }
            })
            .collect()
    }

    /// Attention rows per sentence.
    pub fn attention(&self, batch: &Batch) -> Vec<Vec<Vec<f64>>> {
        let mut g = Graph::new(&self.store);
        (0..batch.len())
            .map(|row| {
                let (s, t) = self.arch.sides(batch, row);
                match self.arch.run(&mut g, s, t) {
                    Some(out) => {
                        let cols = g.shape(out.attention).1;
                        g.value(out.attention).chunks(cols).map(<[f64]>::to_vec).collect()
                    }
                    None => Vec::new(),
                }
            })
            .collect()
    }

    /// Most probable token per position, and the fraction that matches the
    /// actual target tokens.
    pub fn argmax(&self, batch: &Batch) -> Vec<Vec<usize>> {
        self.distributions(batch)
            .into_iter()
            .map(|rows| {
                rows.iter()
                    .map(|r| {
                        r.iter()
                            .enumerate()
                            .fold((0, f64::NEG_INFINITY), |best, (i, &p)| if p > best.1 { (i, p) } else { best })
                            .0
                    })
                    .collect()
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimatorConfig {
    #[serde(default)]
    pub predictor: PredictorConfig,
    /// Pretrained predictor run directory or checkpoint; without one the
    /// predictor starts from random weights and is trained jointly.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub predictor_checkpoint: Option<std::path::PathBuf>,
    #[serde(default)]
    pub finetune_predictor: bool,
    #[serde(default = "default_proj")]
    pub proj_dim: usize,
    #[serde(default = "default_rnn")]
    pub rnn_dim: usize,
    #[serde(default = "default_lambda")]
    pub multitask_weight: f64,
}

fn default_proj() -> usize {
    64
}
fn default_rnn() -> usize {
    64
}
fn default_lambda() -> f64 {
    1.0
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self {
            predictor: PredictorConfig::default(),
            predictor_checkpoint: None,
            finetune_predictor: false,
            proj_dim: default_proj(),
            rnn_dim: default_rnn(),
            multitask_weight: default_lambda(),
        }
    }
}

/// Estimator head over a predictor; both share one parameter store.
#[derive(Debug, Clone)]
pub struct EstimatorModel {
    pub config: EstimatorConfig,
    pub predictor: Predictor,
    store: ParamStore,
    proj: Linear,
    rnn: BiLstm,
    token_out: Linear,
    sentence_out: Linear,
}

/// Token logits `[N, 2]` (absent for an empty sentence) and a `[1, 1]`
/// sentence score after the sigmoid.
#[derive(Debug, Clone, Copy)]
pub struct EstimatorOutputs {
    pub token_logits: Option<NodeId>,
    pub sentence: NodeId,
}

pub(crate) const SENTENCE_HEAD: &str = "estimator.sentence_out";

impl EstimatorModel {
    /// Fresh estimator over a randomly initialized predictor.
    pub fn new(config: EstimatorConfig, source_vocab: usize, target_vocab: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let (ps, pt) = match config.predictor.direction {
            Direction::Forward => (source_vocab, target_vocab),
            Direction::Reverse => (target_vocab, source_vocab),
        };
        let predictor = Predictor::new(&mut store, config.predictor.clone(), ps, pt, &mut rng);
        let f = predictor.feature_dim();
        let proj = Linear::new(&mut store, "estimator.proj", f, config.proj_dim, &mut rng);
        let rnn = BiLstm::new(&mut store, "estimator.rnn", config.proj_dim, config.rnn_dim, &mut rng);
        let token_out = Linear::new(&mut store, "estimator.token_out", rnn.out_dim(), 2, &mut rng);
        let sentence_out = Linear::new(&mut store, SENTENCE_HEAD, rnn.out_dim(), 1, &mut rng);
        let mut model = Self {
            config,
            predictor,
            store,
            proj,
            rnn,
            token_out,
            sentence_out,
        };
        model.apply_freeze();
        model
    }

    /// Estimator on top of a trained predictor, whose weights are copied in.
    pub fn from_predictor(pred: &PredictorModel, mut config: EstimatorConfig, seed: u64) -> Result<Self, ModelError> {
        if config.predictor.direction != pred.arch.direction() {
            return Err(ModelError::DirectionMismatch {
                expected: config.predictor.direction,
                found: pred.arch.direction(),
            });
        }
        config.predictor = pred.arch.config.clone();
        let (ps, pt) = pred.arch.vocab_sizes();
        let (sv, tv) = match config.predictor.direction {
            Direction::Forward => (ps, pt),
            Direction::Reverse => (pt, ps),
        };
        let mut model = Self::new(config, sv, tv, seed);
        model.store.copy_matching(pred.store(), PREDICTOR_PREFIX, PREDICTOR_PREFIX)?;
        Ok(model)
    }

    pub(crate) fn apply_freeze(&mut self) {
        self.store
            .set_requires_grad_prefix(PREDICTOR_PREFIX, self.config.finetune_predictor);
    }

    pub fn task(&self) -> Stream {
        self.predictor.direction().stream()
    }

    pub fn store(&self) -> &ParamStore {
        &self.store
    }

    pub fn store_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    /// Predictor features for one sentence, or `None` for an empty target.
    pub fn predictor_features(&self, g: &mut Graph<'_>, batch: &Batch, row: usize) -> Option<NodeId> {
        let (s, t) = self.predictor.sides(batch, row);
        let out = self.predictor.run(g, s, t)?;
        Some(self.predictor.features(g, &out))
    }

    /// Estimator over `[tokens, feature_dim]` features.
    pub fn estimate(&self, g: &mut Graph<'_>, features: Option<NodeId>, tokens: usize) -> Result<EstimatorOutputs, ModelError> {
        let rows = features.map_or(0, |f| g.shape(f).0);
        if rows != tokens {
            return Err(ModelError::FeatureLength { features: rows, tokens });
        }
        let Some(f) = features else {
            let pooled = g.zeros(1, self.rnn.out_dim());
            let s = self.sentence_out.forward(g, pooled);
            return Ok(EstimatorOutputs {
                token_logits: None,
                sentence: g.sigmoid(s),
            });
        };
        let x = self.proj.forward(g, f);
        let x = g.tanh(x);
        let h = self.rnn.forward(g, x);
        let token_logits = self.token_out.forward(g, h);
        let pooled = g.mean_rows(h);
        let s = self.sentence_out.forward(g, pooled);
        Ok(EstimatorOutputs {
            token_logits: Some(token_logits),
            sentence: g.sigmoid(s),
        })
    }

    fn forward_row(&self, g: &mut Graph<'_>, batch: &Batch, row: usize) -> Result<EstimatorOutputs, ModelError> {
        let feats = self.predictor_features(g, batch, row);
        let (_, tgt) = self.predictor.sides(batch, row);
        self.estimate(g, feats, tgt.len())
    }

    /// Token cross-entropy (mean, BAD positions weighted by `bad_weight`)
    /// plus `multitask_weight` times the squared error on HTER.
    pub fn loss(&self, g: &mut Graph<'_>, batch: &Batch, bad_weight: f64) -> Result<(NodeId, usize), ModelError> {
        let stream = self.task();
        let gold = gold_for(batch, stream)?;
        let lambda = self.config.multitask_weight;
        let hter = match (&batch.hter, lambda != 0.0) {
            (Some(h), _) => Some(h),
            (None, false) => None,
            (None, true) => return Err(ModelError::MissingHter),
        };
        let mut logits = Vec::new();
        let mut targets = Vec::new();
        let mut sentences = Vec::new();
        for row in 0..batch.len() {
            let out = self.forward_row(g, batch, row)?;
            if let Some(l) = out.token_logits {
                logits.push(l);
                targets.extend(gold.row(row).iter().map(|t| t.class()));
            }
            sentences.push(out.sentence);
        }
        let n = targets.len();
        let token_loss = if logits.is_empty() {
            g.matrix(1, 1, vec![0.0])
        } else {
            let all = g.concat_rows(&logits);
            let w: Vec<f64> = targets.iter().map(|&c| if c == 1 { bad_weight } else { 1.0 }).collect();
            let ce = g.cross_entropy(all, &targets, &w);
            g.scale(ce, 1.0 / n as f64)
        };
        let Some(hter) = hter else {
            return Ok((token_loss, n));
        };
        let preds = g.concat_rows(&sentences);
        let mse = g.mse(preds, hter);
        let weighted = g.scale(mse, lambda);
        Ok((g.add(token_loss, weighted), n))
    }

    /// `[p_ok, p_bad]` per token and a sentence score per sentence.
    pub fn predict(&self, batch: &Batch) -> Result<(Vec<Vec<[f64; 2]>>, Vec<f64>), ModelError> {
        let mut g = Graph::new(&self.store);
        let mut tokens = Vec::with_capacity(batch.len());
        let mut sentences = Vec::with_capacity(batch.len());
        for row in 0..batch.len() {
            let out = self.forward_row(&mut g, batch, row)?;
            tokens.push(match out.token_logits {
                Some(l) => softmax_rows(g.value(l), 2).chunks(2).map(|c| [c[0], c[1]]).collect(),
                None => Vec::new(),
            });
            sentences.push(g.scalar(out.sentence));
        }
        Ok((tokens, sentences))
    }
}

/// Source-side OK/BAD distributions from an estimator whose predictor was
/// trained in the target-to-source direction.
pub fn source_labels_via_reverse(estimator: &EstimatorModel, batch: &Batch) -> Result<Vec<Vec<[f64; 2]>>, ModelError> {
    if estimator.predictor.direction() != Direction::Reverse {
        return Err(ModelError::DirectionMismatch {
            expected: Direction::Reverse,
            found: estimator.predictor.direction(),
        });
    }
    Ok(estimator.predict(batch)?.0)
}
