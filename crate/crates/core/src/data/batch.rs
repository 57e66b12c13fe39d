use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::vocab::{Vocabulary, PAD, UNALIGNED};
use super::QeSample;
use crate::tags::Tag;

/// Row-padded matrix with per-row true lengths.
#[derive(Debug, Clone, PartialEq)]
pub struct Padded<T> {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<T>,
    pub lengths: Vec<usize>,
}

impl<T: Clone> Padded<T> {
    pub fn from_rows(rows: &[Vec<T>], pad: T) -> Self {
        let cols = rows.iter().map(Vec::len).max().unwrap_or(0);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            data.extend(r.iter().cloned());
            data.extend(std::iter::repeat_n(pad.clone(), cols - r.len()));
        }
        Self {
            rows: rows.len(),
            cols,
            data,
            lengths: rows.iter().map(Vec::len).collect(),
        }
    }

    /// The unpadded part of row `i`.
    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..i * self.cols + self.lengths[i]]
    }

    pub fn is_valid(&self, i: usize, j: usize) -> bool {
        j < self.lengths[i]
    }

    /// `true` exactly on non-pad positions, row-major.
    pub fn mask(&self) -> Vec<bool> {
        (0..self.rows)
            .flat_map(|i| (0..self.cols).map(move |j| (i, j)))
            .map(|(i, j)| self.is_valid(i, j))
            .collect()
    }
}

/// A numericalized minibatch.
#[derive(Debug, Clone)]
pub struct Batch {
    /// Positions of the samples in the input slice.
    pub indices: Vec<usize>,
    pub source: Padded<usize>,
    pub mt: Padded<usize>,
    /// Leftmost source position aligned to each MT token.
    pub mt_to_source: Padded<Option<usize>>,
    /// Leftmost MT position aligned to each source token.
    pub source_to_mt: Padded<Option<usize>>,
    /// Id of the aligned source token for each MT token, or the unaligned
    /// symbol.
    pub mt_aligned_ids: Padded<usize>,
    pub mt_tags: Option<Padded<Tag>>,
    pub gap_tags: Option<Padded<Tag>>,
    pub source_tags: Option<Padded<Tag>>,
    pub hter: Option<Vec<f64>>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

/// Source and target vocabularies used to numericalize samples.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Vocabs {
    pub source: Vocabulary,
    pub target: Vocabulary,
}

impl Vocabs {
    pub fn build(samples: &[QeSample], min_freq: usize) -> Self {
        Self {
            source: Vocabulary::build(samples.iter().map(|s| s.source.as_slice()), min_freq),
            target: Vocabulary::build(samples.iter().map(|s| s.mt.as_slice()), min_freq),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BatchOrder {
    Sequential,
    /// Shuffled by a generator seeded from `seed` on stream `epoch`.
    Shuffled { seed: u64, epoch: u64 },
}

fn leftmost(pairs: &[(usize, usize)], len: usize, key: impl Fn(&(usize, usize)) -> (usize, usize)) -> Vec<Option<usize>> {
    let mut out = vec![None; len];
    for p in pairs {
        let (pos, other) = key(p);
        let slot = &mut out[pos];
        *slot = Some(slot.map_or(other, |o: usize| o.min(other)));
    }
    out
}

/// Numericalizes `samples[indices]` into one padded batch.
pub fn collate(samples: &[QeSample], indices: &[usize], vocabs: &Vocabs) -> Batch {
    let picked: Vec<&QeSample> = indices.iter().map(|&i| &samples[i]).collect();
    let src: Vec<Vec<usize>> = picked.iter().map(|s| vocabs.source.numericalize(&s.source)).collect();
    let mt: Vec<Vec<usize>> = picked.iter().map(|s| vocabs.target.numericalize(&s.mt)).collect();
    let mt_to_src: Vec<Vec<Option<usize>>> = picked
        .iter()
        .map(|s| leftmost(&s.alignments, s.mt.len(), |&(a, b)| (b, a)))
        .collect();
    let src_to_mt: Vec<Vec<Option<usize>>> = picked
        .iter()
        .map(|s| leftmost(&s.alignments, s.source.len(), |&(a, b)| (a, b)))
        .collect();
    let aligned_ids: Vec<Vec<usize>> = mt_to_src
        .iter()
        .zip(&src)
        .map(|(al, s)| al.iter().map(|a| a.map_or(UNALIGNED, |k| s[k])).collect())
        .collect();
    let tags = |f: fn(&QeSample) -> Option<&Vec<Tag>>| -> Option<Padded<Tag>> {
        let rows: Option<Vec<Vec<Tag>>> = picked.iter().map(|s| f(s).cloned()).collect();
        rows.map(|r| Padded::from_rows(&r, Tag::Ok))
    };
    Batch {
        indices: indices.to_vec(),
        source: Padded::from_rows(&src, PAD),
        mt: Padded::from_rows(&mt, PAD),
        mt_to_source: Padded::from_rows(&mt_to_src, None),
        source_to_mt: Padded::from_rows(&src_to_mt, None),
        mt_aligned_ids: Padded::from_rows(&aligned_ids, UNALIGNED),
        mt_tags: tags(|s| s.mt_tags.as_ref()),
        gap_tags: tags(|s| s.gap_tags.as_ref()),
        source_tags: tags(|s| s.source_tags.as_ref()),
        hter: picked.iter().map(|s| s.hter).collect(),
    }
}

/// Splits `samples` into batches of at most `batch_size`. Every sample
/// appears exactly once; the order depends only on `order`.
pub fn make_batches(samples: &[QeSample], vocabs: &Vocabs, batch_size: usize, order: BatchOrder) -> Vec<Batch> {
    assert!(batch_size >= 1, "batch_size must be at least 1");
    let mut idx: Vec<usize> = (0..samples.len()).collect();
    if let BatchOrder::Shuffled { seed, epoch } = order {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(epoch);
        idx.shuffle(&mut rng);
    }
    idx.chunks(batch_size).map(|c| collate(samples, c, vocabs)).collect()
}
