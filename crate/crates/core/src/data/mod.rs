//! Corpus files, vocabularies and minibatching.
//!
//! Every file is UTF-8 with one pre-tokenized sentence per line. Parallel
//! files must agree on line count, and tag files must agree with the token
//! counts of their sentences: `N` MT tags, `N + 1` gap tags, `M` source
//! tags.

mod batch;
mod corpus;
mod vocab;

use std::path::{Path, PathBuf};

pub use batch::{collate, make_batches, Batch, BatchOrder, Padded, Vocabs};
pub use corpus::{
    format_alignments, load_corpus, load_triplets, parse_alignments, parse_tag_line, tokenize, write_lines,
    write_scores, write_tags, AlignmentError, AlignmentPair, CorpusFiles, QeSample, SentenceTriplet, TagLineError,
};
pub(crate) use corpus::read_lines;
pub use vocab::{Vocabulary, PAD, SPECIALS, START, STOP, UNALIGNED, UNK};

/// Default cap on sentence length, in tokens.
pub const DEFAULT_MAX_LEN: usize = 200;

/// How one input stream is tokenized and turned into ids.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    pub name: String,
    pub min_freq: usize,
    pub max_len: usize,
}

impl Field {
    pub fn new(name: &str) -> Self {
        Self {
            name: name.to_string(),
            min_freq: 1,
            max_len: DEFAULT_MAX_LEN,
        }
    }

    pub fn with_min_freq(mut self, min_freq: usize) -> Self {
        self.min_freq = min_freq;
        self
    }

    pub fn tokenize(&self, line: &str) -> Vec<String> {
        tokenize(line)
    }

    pub fn build_vocab(&self, corpus: &[Vec<String>]) -> Vocabulary {
        Vocabulary::build(corpus.iter().map(Vec::as_slice), self.min_freq)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum DataError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("no {0} file configured")]
    MissingFile(&'static str),
    #[error("{}: expected {expected} lines, found {found}", path.display())]
    LineCount { path: PathBuf, expected: usize, found: usize },
    #[error("{}:{line}: expected {expected} tags, found {found}", path.display())]
    TagCount {
        path: PathBuf,
        line: usize,
        expected: usize,
        found: usize,
    },
    #[error("{}:{line}: unknown tag {tag:?} (expected OK or BAD)", path.display())]
    BadTag { path: PathBuf, line: usize, tag: String },
    #[error("{}:{line}: {source}", path.display())]
    Alignment {
        path: PathBuf,
        line: usize,
        #[source]
        source: AlignmentError,
    },
    #[error("{}:{line}: expected a score in [0, 1], found {value:?}", path.display())]
    BadScore { path: PathBuf, line: usize, value: String },
    #[error("{}:{line}: sentence has {len} tokens, limit is {max}", path.display())]
    TooLong {
        path: PathBuf,
        line: usize,
        len: usize,
        max: usize,
    },
    #[error("{}: {message}", path.display())]
    Format { path: PathBuf, message: String },
}

impl DataError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        DataError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}
