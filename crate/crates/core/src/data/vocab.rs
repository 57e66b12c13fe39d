use std::collections::HashMap;
use std::path::Path;

use sha2::{Digest, Sha256};

use super::DataError;

pub const PAD: usize = 0;
pub const UNK: usize = 1;
pub const START: usize = 2;
pub const STOP: usize = 3;
pub const UNALIGNED: usize = 4;

/// Special symbols, in id order.
pub const SPECIALS: [&str; 5] = ["<pad>", "<unk>", "<s>", "</s>", "<unaligned>"];

/// Token/id mapping. Specials always occupy ids 0..5.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    itos: Vec<String>,
    stoi: HashMap<String, usize>,
    freqs: Vec<usize>,
}

impl Default for Vocabulary {
    fn default() -> Self {
        Self::from_tokens(std::iter::empty::<(String, usize)>())
    }
}

impl Vocabulary {
    /// Counts tokens and keeps those seen at least `min_freq` times, ordered
    /// by descending frequency and then lexicographically.
    pub fn build<'a, I>(sentences: I, min_freq: usize) -> Self
    where
        I: IntoIterator<Item = &'a [String]>,
    {
        let mut counts: HashMap<&str, usize> = HashMap::new();
        for s in sentences {
            for tok in s {
                *counts.entry(tok.as_str()).or_default() += 1;
            }
        }
        let mut entries: Vec<(&str, usize)> = counts
            .into_iter()
            .filter(|(t, c)| *c >= min_freq.max(1) && !SPECIALS.contains(t))
            .collect();
        entries.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        Self::from_tokens(entries.into_iter().map(|(t, c)| (t.to_string(), c)))
    }

    fn from_tokens(tokens: impl IntoIterator<Item = (String, usize)>) -> Self {
        let mut itos: Vec<String> = SPECIALS.iter().map(|s| s.to_string()).collect();
        let mut freqs = vec![0; SPECIALS.len()];
        for (t, c) in tokens {
            itos.push(t);
            freqs.push(c);
        }
        let stoi = itos.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        Self { itos, stoi, freqs }
    }

    pub fn len(&self) -> usize {
        self.itos.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Id of `token`, or [`UNK`].
    pub fn id(&self, token: &str) -> usize {
        self.stoi.get(token).copied().unwrap_or(UNK)
    }

    pub fn contains(&self, token: &str) -> bool {
        self.stoi.contains_key(token)
    }

    pub fn token(&self, id: usize) -> &str {
        &self.itos[id]
    }

    pub fn frequency(&self, id: usize) -> usize {
        self.freqs[id]
    }

    pub fn tokens(&self) -> &[String] {
        &self.itos
    }

    pub fn numericalize(&self, tokens: &[String]) -> Vec<usize> {
        tokens.iter().map(|t| self.id(t)).collect()
    }

    pub fn denumericalize(&self, ids: &[usize]) -> Vec<String> {
        ids.iter().map(|&i| self.itos[i].clone()).collect()
    }

    /// SHA-256 over the id-ordered token list, hex encoded.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        for t in &self.itos {
            h.update(t.as_bytes());
            h.update(b"\n");
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }

    /// One `token<TAB>frequency` line per non-special entry, in id order.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (t, c) in self.itos.iter().zip(&self.freqs).skip(SPECIALS.len()) {
            out.push_str(t);
            out.push('\t');
            out.push_str(&c.to_string());
            out.push('\n');
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self, String> {
        let mut tokens = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let (tok, freq) = line
                .split_once('\t')
                .ok_or_else(|| format!("vocabulary line {}: expected token<TAB>count", i + 1))?;
            let freq = freq
                .parse()
                .map_err(|_| format!("vocabulary line {}: bad count {freq:?}", i + 1))?;
            tokens.push((tok.to_string(), freq));
        }
        let v = Self::from_tokens(tokens);
        if v.stoi.len() != v.itos.len() {
            return Err("vocabulary contains duplicate tokens".into());
        }
        Ok(v)
    }

    pub fn save(&self, path: &Path) -> Result<(), DataError> {
        std::fs::write(path, self.to_text()).map_err(|e| DataError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self, DataError> {
        let text = std::fs::read_to_string(path).map_err(|e| DataError::io(path, e))?;
        Self::from_text(&text).map_err(|m| DataError::Format {
            path: path.to_path_buf(),
            message: m,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(s: &str) -> Vec<String> {
        s.split_whitespace().map(String::from).collect()
    }

    #[test]
    fn specials_have_fixed_ids() {
        let v = Vocabulary::build([toks("x y").as_slice()], 1);
        for (i, s) in SPECIALS.iter().enumerate() {
            assert_eq!(v.id(s), i);
        }
        assert_eq!(v.id("never-seen"), UNK);
    }

    #[test]
    fn min_frequency_threshold() {
        let v = Vocabulary::build([toks("a a b").as_slice()], 2);
        assert!(v.contains("a"));
        assert!(!v.contains("b"));
    }

    #[test]
    fn ties_break_lexicographically() {
        let v = Vocabulary::build([toks("y x z z").as_slice()], 1);
        assert_eq!(&v.tokens()[5..], &["z", "x", "y"]);
    }

    #[test]
    fn build_is_deterministic() {
        let corpus = [toks("the cat sat on the mat"), toks("a cat and a dog")];
        let a = Vocabulary::build(corpus.iter().map(|s| s.as_slice()), 1);
        let b = Vocabulary::build(corpus.iter().map(|s| s.as_slice()), 1);
        assert_eq!(a, b);
        assert_eq!(a.fingerprint(), b.fingerprint());
    }

    #[test]
    fn text_roundtrip() {
        let v = Vocabulary::build([toks("a a b c").as_slice()], 1);
        assert_eq!(Vocabulary::from_text(&v.to_text()).unwrap(), v);
    }
}
