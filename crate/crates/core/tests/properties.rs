use std::collections::BTreeMap;

use kiwi::data::{collate, QeSample, SentenceTriplet, Vocabs, Vocabulary};
use kiwi::ensemble::{average_predictions, LinearStacker, SystemPrediction};
use kiwi::labels::{edit_alignment, hter, label_triplet};
use kiwi::metrics::{average_ranks, f1_mult, pearson, spearman};
use kiwi::models::{Model, ModelSpec, NuqeConfig, QuetchConfig};
use kiwi::numerics::{forward_backward, grad_check, GradCheckOptions, Graph, NodeId, NumericsError, ParamId, ParamStore, Tensor};
use kiwi::{Stream, Tag};
use proptest::prelude::*;

fn config(cases: u32) -> ProptestConfig {
    ProptestConfig {
        cases,
        ..ProptestConfig::default()
    }
}

fn words(max: usize) -> impl Strategy<Value = Vec<String>> {
    prop::collection::vec(prop::sample::select(vec!["a", "b", "c", "d"]), 0..=max)
        .prop_map(|v| v.into_iter().map(String::from).collect())
}

fn tags(len: usize) -> impl Strategy<Value = Vec<Tag>> {
    prop::collection::vec(prop::bool::ANY.prop_map(|b| if b { Tag::Bad } else { Tag::Ok }), len)
}

/// Matrix values kept away from zero so ReLU and friends stay smooth.
fn matrix(rows: usize, cols: usize) -> impl Strategy<Value = Tensor> {
    prop::collection::vec((0.1f64..1.5, prop::bool::ANY), rows * cols).prop_map(move |v| {
        let vals = v.into_iter().map(|(x, neg)| if neg { -x } else { x }).collect();
        Tensor::matrix(rows, cols, vals).unwrap()
    })
}

#[derive(Debug, Clone, Copy)]
enum Op {
    Matmul,
    Add,
    Sub,
    Mul,
    AddRow,
    Affine,
    Tanh,
    Sigmoid,
    Relu,
    Softmax,
    Concat,
    Gather,
    SliceCols,
    Embedding,
    CrossEntropy,
    Mse,
    MeanRows,
}

const OPS: [Op; 17] = [
    Op::Matmul,
    Op::Add,
    Op::Sub,
    Op::Mul,
    Op::AddRow,
    Op::Affine,
    Op::Tanh,
    Op::Sigmoid,
    Op::Relu,
    Op::Softmax,
    Op::Concat,
    Op::Gather,
    Op::SliceCols,
    Op::Embedding,
    Op::CrossEntropy,
    Op::Mse,
    Op::MeanRows,
];

/// Loss = sum(op(a, b) * probe), with a fixed probe so every output
/// coordinate gets a distinct upstream gradient.
fn op_loss(g: &mut Graph<'_>, op: Op, a: ParamId, b: ParamId, r: usize, c: usize) -> Result<NodeId, NumericsError> {
    let (a, b) = (g.param(a), g.param(b));
    let out = match op {
        Op::Matmul => {
            let bt = g.transpose(b);
            g.matmul(a, bt)
        }
        Op::Add => g.add(a, b),
        Op::Sub => g.sub(a, b),
        Op::Mul => g.mul(a, b),
        Op::AddRow => {
            let row = g.slice_rows(b, 0, 1);
            g.add_row(a, row)
        }
        Op::Affine => g.affine(a, 1.7, -0.3),
        Op::Tanh => g.tanh(a),
        Op::Sigmoid => g.sigmoid(a),
        Op::Relu => g.relu(a),
        Op::Softmax => g.softmax(a),
        Op::Concat => g.concat_cols(&[a, b]),
        Op::Gather => {
            let rows: Vec<usize> = (0..r + 1).map(|i| (i * 7) % r).collect();
            g.gather_rows(a, &rows)
        }
        Op::SliceCols => g.slice_cols(a, c / 2, c - c / 2),
        Op::Embedding => {
            let ids: Vec<usize> = (0..3).map(|i| (i * 5 + 1) % r).collect();
            g.embedding(a, &ids)
        }
        Op::CrossEntropy => {
            let targets: Vec<usize> = (0..r).map(|i| (i * 3) % c).collect();
            let weights: Vec<f64> = (0..r).map(|i| 1.0 + i as f64 * 0.5).collect();
            return Ok(g.cross_entropy(a, &targets, &weights));
        }
        Op::Mse => {
            let target: Vec<f64> = (0..r * c).map(|i| (i as f64 * 0.37).sin()).collect();
            return Ok(g.mse(a, &target));
        }
        Op::MeanRows => g.mean_rows(a),
    };
    let (rows, cols) = g.shape(out);
    let probe: Vec<f64> = (0..rows * cols).map(|i| ((i as f64 + 1.0) * 0.91).cos()).collect();
    let p = g.matrix(rows, cols, probe);
    let weighted = g.mul(out, p);
    Ok(g.sum(weighted))
}

proptest! {
    #![proptest_config(config(24))]

    #[test]
    fn every_primitive_matches_finite_differences(
        op in prop::sample::select(OPS.to_vec()),
        (a, b) in (1usize..=8, 1usize..=8).prop_flat_map(|(r, c)| (matrix(r, c), matrix(r, c))),
    ) {
        let (r, c) = (a.shape()[0], a.shape()[1]);
        let mut store = ParamStore::new();
        let pa = store.insert("a", a);
        let pb = store.insert("b", b);
        let report = grad_check(&mut store, |g| op_loss(g, op, pa, pb, r, c), &GradCheckOptions::default()).unwrap();
        prop_assert!(report.coordinates > 0 && report.nonsmooth == 0);
        prop_assert!(report.within(1e-4), "{op:?} {r}x{c}: {report:?}");
    }

    #[test]
    fn softmax_rows_sum_to_one(t in (1usize..=8, 1usize..=8).prop_flat_map(|(r, c)| matrix(r, c)), scale in 0.1f64..50.0) {
        let store = ParamStore::new();
        let mut g = Graph::new(&store);
        let x = g.constant(&t);
        let x = g.scale(x, scale);
        let s = g.softmax(x);
        let (rows, cols) = g.shape(s);
        let v = g.value(s);
        for i in 0..rows {
            let row = &v[i * cols..(i + 1) * cols];
            prop_assert!(row.iter().all(|p| (0.0..=1.0).contains(p)));
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn forward_backward_is_deterministic(t in (1usize..=8, 1usize..=8).prop_flat_map(|(r, c)| matrix(r, c))) {
        let run = || {
            let mut store = ParamStore::new();
            let id = store.insert("w", t.clone());
            let loss = forward_backward(&mut store, |g| {
                let w = g.param(id);
                let h = g.tanh(w);
                let s = g.softmax(h);
                Ok(g.sum(s))
            })
            .unwrap();
            (loss.to_bits(), store.get(id).grad().unwrap().iter().map(|x| x.to_bits()).collect::<Vec<_>>())
        };
        prop_assert_eq!(run(), run());
    }
}

proptest! {
    #![proptest_config(config(128))]

    #[test]
    fn vocabulary_round_trips_known_tokens(sents in prop::collection::vec(words(8), 1..6)) {
        let vocab = Vocabulary::build(sents.iter().map(Vec::as_slice), 1);
        for s in &sents {
            prop_assert_eq!(&vocab.denumericalize(&vocab.numericalize(s)), s);
        }
        let text = Vocabulary::from_text(&vocab.to_text()).unwrap();
        prop_assert_eq!(text.fingerprint(), vocab.fingerprint());
    }

    #[test]
    fn unpadding_recovers_every_sample(pairs in prop::collection::vec((words(6), words(6)), 1..6)) {
        let samples: Vec<QeSample> = pairs.iter().map(|(s, m)| QeSample::new(&s.join(" "), &m.join(" "))).collect();
        let vocabs = Vocabs::build(&samples, 1);
        let order: Vec<usize> = (0..samples.len()).rev().collect();
        let batch = collate(&samples, &order, &vocabs);
        for (row, &i) in order.iter().enumerate() {
            prop_assert_eq!(vocabs.source.denumericalize(batch.source.row(row)), samples[i].source.clone());
            prop_assert_eq!(vocabs.target.denumericalize(batch.mt.row(row)), samples[i].mt.clone());
        }
        let valid = batch.mt.mask().iter().filter(|m| **m).count();
        prop_assert_eq!(valid, samples.iter().map(|s| s.mt.len()).sum::<usize>());
    }

    #[test]
    fn edit_script_rebuilds_the_post_edit(mt in words(7), pe in words(7)) {
        let script = edit_alignment(&mt, &pe);
        prop_assert_eq!(script.apply(&mt, &pe), pe.clone());
        let h = hter(&mt, &pe);
        prop_assert_eq!(h == 0.0, mt == pe || (mt.is_empty() && pe.is_empty()));
        let labels = label_triplet(&SentenceTriplet {
            source: Vec::new(),
            mt: mt.clone(),
            pe: pe.clone(),
            alignments: Vec::new(),
        })
        .unwrap();
        prop_assert_eq!(labels.tags.mt_tags.len(), mt.len());
        prop_assert_eq!(labels.tags.gap_tags.len(), mt.len() + 1);
        let bad = labels.tags.mt_tags.iter().chain(&labels.tags.gap_tags).filter(|t| **t == Tag::Bad).count();
        prop_assert_eq!(bad >= 1, h > 0.0);
    }

    #[test]
    fn f1_ignores_token_order((gold, pred, perm) in (1usize..40).prop_flat_map(|n| (tags(n), tags(n), Just((0..n).collect::<Vec<_>>()).prop_shuffle()))) {
        let g2: Vec<Tag> = perm.iter().map(|&i| gold[i]).collect();
        let p2: Vec<Tag> = perm.iter().map(|&i| pred[i]).collect();
        match (f1_mult(&gold, &pred), f1_mult(&g2, &p2)) {
            (Ok(a), Ok(b)) => prop_assert!((a.f1_mult - b.f1_mult).abs() < 1e-12),
            (a, b) => prop_assert_eq!(a.is_err(), b.is_err()),
        }
    }

    #[test]
    fn pearson_survives_positive_affine_maps(
        (x, y) in (3usize..30).prop_flat_map(|n| (prop::collection::vec(-5.0f64..5.0, n), prop::collection::vec(-5.0f64..5.0, n))),
        a in 0.1f64..10.0,
        b in -10.0f64..10.0,
    ) {
        if let Ok(r) = pearson(&x, &y) {
            let z: Vec<f64> = y.iter().map(|v| a * v + b).collect();
            prop_assert!((pearson(&x, &z).unwrap() - r).abs() < 1e-9);
            let neg: Vec<f64> = y.iter().map(|v| -a * v + b).collect();
            prop_assert!((pearson(&x, &neg).unwrap() + r).abs() < 1e-9);
            prop_assert!(r.abs() <= 1.0 + 1e-12);
        }
    }

    #[test]
    fn spearman_is_pearson_of_ranks(perm in (3usize..30).prop_flat_map(|n| Just((0..n).collect::<Vec<usize>>()).prop_shuffle())) {
        let x: Vec<f64> = (0..perm.len()).map(|i| i as f64 * 1.5 - 3.0).collect();
        let y: Vec<f64> = perm.iter().map(|&p| (p as f64).powi(3)).collect();
        let by_ranks = pearson(&average_ranks(&x), &average_ranks(&y)).unwrap();
        prop_assert!((spearman(&x, &y).unwrap() - by_ranks).abs() < 1e-12);
    }

    #[test]
    fn averaging_copies_is_the_identity(
        probs in prop::collection::vec(prop::collection::vec(0.0f64..=1.0, 0..6), 1..4),
        k in 1usize..6,
    ) {
        let sys = SystemPrediction::new("s").with_stream(Stream::Mt, probs.clone());
        let copies = vec![sys; k];
        let avg = average_predictions(&copies).unwrap();
        prop_assert_eq!(&avg.streams[&Stream::Mt], &probs);
    }
}

#[test]
fn stacker_only_accepts_mt() {
    assert!(LinearStacker::check_stream(Stream::Mt).is_ok());
    assert!(LinearStacker::check_stream(Stream::Gap).is_err());
    assert!(LinearStacker::check_stream(Stream::Source).is_err());
}

proptest! {
    #![proptest_config(config(16))]

    #[test]
    fn word_models_emit_finite_probabilities(
        pairs in prop::collection::vec((words(5), words(5)), 1..4),
        seed in 0u64..1000,
        nuqe in prop::bool::ANY,
    ) {
        let samples: Vec<QeSample> = pairs.iter().map(|(s, m)| QeSample::new(&s.join(" "), &m.join(" "))).collect();
        let vocabs = Vocabs::build(&samples, 1);
        let spec = if nuqe {
            ModelSpec::Nuqe(NuqeConfig { task: Stream::Gap, window: 3, embedding_dim: 3, hidden_dim: 4, rnn_dim: 3 })
        } else {
            ModelSpec::Quetch(QuetchConfig { task: Stream::Mt, window: 3, embedding_dim: 4, hidden_dim: 5 })
        };
        let model = Model::build(&spec, &vocabs, seed).unwrap();
        let idx: Vec<usize> = (0..samples.len()).collect();
        let pred = model.predict(&collate(&samples, &idx, &vocabs)).unwrap();
        for (p, s) in pred.bad_probs.iter().zip(&samples) {
            let expected = if nuqe { s.mt.len() + 1 } else { s.mt.len() };
            prop_assert_eq!(p.len(), expected);
            prop_assert!(p.iter().all(|x| x.is_finite() && (0.0..=1.0).contains(x)));
        }
    }
}

#[test]
fn history_has_one_record_per_epoch() {
    use kiwi::synthetic::{generate_triplets, label_corpus, write_samples, SyntheticConfig};
    use kiwi::trainer::{train, DataConfig, ModelConfig, TrainConfig, TrainingConfig};

    let dir = tempfile::tempdir().unwrap();
    let samples = label_corpus(&generate_triplets(&SyntheticConfig::default(), 12, 4)).unwrap();
    let files = write_samples(&dir.path().join("data"), "train", &samples).unwrap();
    for epochs in [1usize, 3] {
        let cfg = TrainConfig {
            seed: 2,
            output_dir: dir.path().join(format!("run{epochs}")),
            data: DataConfig {
                train: files.clone(),
                valid: Some(files.clone()),
                vocab_min_freq: 1,
                max_len: 200,
            },
            model: ModelConfig::Quetch(QuetchConfig { task: Stream::Mt, window: 3, embedding_dim: 4, hidden_dim: 6 }),
            training: TrainingConfig { epochs, batch_size: 4, ..Default::default() },
        };
        let record = train(&cfg).unwrap();
        assert_eq!(record.history.len(), epochs);
        let epochs_seen: Vec<usize> = record.history.iter().map(|h| h.epoch).collect();
        let best = record.best_epoch.unwrap();
        assert!(epochs_seen.contains(&best), "best epoch {best} not in {epochs_seen:?}");
        let metrics: BTreeMap<_, _> = record.history.iter().map(|h| (h.epoch, h.train_loss)).collect();
        assert!(metrics.values().all(|l| l.is_finite()));
    }
}
