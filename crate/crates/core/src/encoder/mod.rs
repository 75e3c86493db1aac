//! CBOW-style encoder with negative sampling.
//!
//! The hidden layer is the mean of the input rows of the context tokens; the
//! center token is scored against it through the output matrix. After
//! training, the input matrix row of a token is its embedding.

mod io;
mod objective;
mod train;

pub use io::{read_checkpoint, write_checkpoint, write_tsv, write_vectors_tsv};
pub use objective::{apply_gradients, loss_and_grad, Gradients, SparseRows};
pub use train::{train, train_with_control, TrainOutcome, TrainStats};

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sampler::TrainingPair;

#[derive(Debug, Error)]
pub enum EncoderError {
    #[error("cannot build a vocabulary from an empty training set")]
    EmptyInput,
    #[error("token {0} is not in the vocabulary")]
    UnknownToken(String),
    #[error("token index {0} is out of range")]
    IndexOutOfRange(usize),
    #[error("negative sample {0} is the center token")]
    NegativeIsCenter(usize),
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("parameters became non-finite during epoch {epoch}")]
    Diverged { epoch: usize },
    #[error("token {0:?} cannot be written to a TSV row")]
    UnwritableToken(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Dense token indexing, most frequent first (ties by token).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    counts: Vec<u64>,
    index: HashMap<String, usize>,
}

impl Vocabulary {
    pub fn build(pairs: &[TrainingPair]) -> Result<Self, EncoderError> {
        if pairs.is_empty() {
            return Err(EncoderError::EmptyInput);
        }
        let mut counts: HashMap<&str, u64> = HashMap::new();
        for p in pairs {
            *counts.entry(&p.center).or_default() += 1;
            for t in &p.context {
                *counts.entry(t).or_default() += 1;
            }
        }
        let mut entries: Vec<(&str, u64)> = counts.into_iter().collect();
        entries.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        Self::from_entries(entries.into_iter().map(|(t, c)| (t.to_string(), c)).collect())
    }

    /// Vocabulary with exactly the given `(token, count)` order.
    pub fn from_entries(entries: Vec<(String, u64)>) -> Result<Self, EncoderError> {
        let mut index = HashMap::with_capacity(entries.len());
        for (i, (t, _)) in entries.iter().enumerate() {
            if index.insert(t.clone(), i).is_some() {
                return Err(EncoderError::Config(format!("duplicate token {t}")));
            }
        }
        let (tokens, counts) = entries.into_iter().unzip();
        Ok(Self { tokens, counts, index })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn index_of(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn token(&self, i: usize) -> &str {
        &self.tokens[i]
    }

    pub fn count(&self, i: usize) -> u64 {
        self.counts[i]
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    fn require(&self, token: &str) -> Result<usize, EncoderError> {
        self.index_of(token).ok_or_else(|| EncoderError::UnknownToken(token.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// Embedding dimension (hidden layer width).
    pub dim: usize,
    /// Noise samples per positive.
    pub negatives: usize,
    pub lr_start: f64,
    pub lr_end: f64,
    pub epochs: usize,
    pub seed: u64,
    /// 1 = sequential and bit-reproducible.
    pub workers: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { dim: 50, negatives: 5, lr_start: 0.025, lr_end: 0.0001, epochs: 1, seed: 1, workers: 1 }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), EncoderError> {
        let bad = |m: &str| Err(EncoderError::Config(m.to_string()));
        if self.dim == 0 {
            return bad("dim must be at least 1");
        }
        if self.epochs == 0 {
            return bad("epochs must be at least 1");
        }
        if self.workers == 0 {
            return bad("workers must be at least 1");
        }
        if !(self.lr_start.is_finite() && self.lr_end.is_finite() && self.lr_start > 0.0 && self.lr_end > 0.0) {
            return bad("learning rates must be finite and positive");
        }
        if self.lr_start < self.lr_end {
            return bad("lr_start must not be below lr_end");
        }
        Ok(())
    }
}

/// Vocabulary plus input/output parameter matrices, both `|vocab| x dim`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingModel {
    vocab: Vocabulary,
    dim: usize,
    w_in: Vec<f64>,
    w_out: Vec<f64>,
}

impl EmbeddingModel {
    /// Input rows uniform in `[-0.5/dim, 0.5/dim]`, output rows zero.
    pub fn initialize(vocab: Vocabulary, dim: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let half = 0.5 / dim as f64;
        let w_in = (0..vocab.len() * dim).map(|_| rng.random_range(-half..=half)).collect();
        let w_out = vec![0.0; vocab.len() * dim];
        Self { vocab, dim, w_in, w_out }
    }

    pub fn from_parts(vocab: Vocabulary, dim: usize, w_in: Vec<f64>, w_out: Vec<f64>) -> Result<Self, EncoderError> {
        if dim == 0 || w_in.len() != vocab.len() * dim || w_out.len() != vocab.len() * dim {
            return Err(EncoderError::Config(format!(
                "matrix shapes do not match vocabulary of {} tokens and dim {dim}",
                vocab.len()
            )));
        }
        Ok(Self { vocab, dim, w_in, w_out })
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn w_in(&self) -> &[f64] {
        &self.w_in
    }

    pub fn w_out(&self) -> &[f64] {
        &self.w_out
    }

    pub fn w_in_mut(&mut self) -> &mut [f64] {
        &mut self.w_in
    }

    pub fn w_out_mut(&mut self) -> &mut [f64] {
        &mut self.w_out
    }

    pub fn in_row(&self, i: usize) -> &[f64] {
        &self.w_in[i * self.dim..(i + 1) * self.dim]
    }

    pub fn out_row(&self, i: usize) -> &[f64] {
        &self.w_out[i * self.dim..(i + 1) * self.dim]
    }

    /// The embedding of `token`, or `None` if it was never sampled.
    pub fn lookup(&self, token: &str) -> Option<&[f64]> {
        self.vocab.index_of(token).map(|i| self.in_row(i))
    }

    pub fn is_finite(&self) -> bool {
        self.w_in.iter().chain(&self.w_out).all(|x| x.is_finite())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pair(c: &str, ctx: &[&str]) -> TrainingPair {
        TrainingPair { center: c.into(), context: ctx.iter().map(|s| s.to_string()).collect() }
    }

    #[test]
    fn vocabulary_counts_every_occurrence() {
        let v = Vocabulary::build(&[pair("a", &["b"]), pair("b", &["a"])]).unwrap();
        assert_eq!(v.len(), 2);
        assert_eq!(v.count(v.index_of("a").unwrap()), 2);
        assert_eq!(v.count(v.index_of("b").unwrap()), 2);
        // equal counts: token order
        assert_eq!(v.tokens(), ["a", "b"]);

        let v = Vocabulary::build(&[pair("a", &["x", "x"])]).unwrap();
        assert_eq!(v.tokens(), ["x", "a"]);
        assert_eq!(v.counts(), [2, 1]);
    }

    #[test]
    fn vocabulary_rejects_empty_input_and_is_deterministic() {
        assert!(matches!(Vocabulary::build(&[]), Err(EncoderError::EmptyInput)));
        let pairs = [pair("q", &["r", "s"]), pair("s", &["q", "t"]), pair("t", &["r"])];
        assert_eq!(Vocabulary::build(&pairs).unwrap(), Vocabulary::build(&pairs).unwrap());
    }

    #[test]
    fn lookup_is_the_input_row_or_absent() {
        let v = Vocabulary::build(&[pair("a", &["b"])]).unwrap();
        let m = EmbeddingModel::initialize(v, 4, 3);
        let i = m.vocab().index_of("b").unwrap();
        assert_eq!(m.lookup("b").unwrap(), &m.w_in()[i * 4..i * 4 + 4]);
        assert!(m.lookup("never").is_none());
        assert!(m.w_in().iter().all(|x| x.abs() <= 0.125));
        assert!(m.w_out().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        for bad in [
            TrainConfig { dim: 0, ..Default::default() },
            TrainConfig { epochs: 0, ..Default::default() },
            TrainConfig { workers: 0, ..Default::default() },
            TrainConfig { lr_start: f64::NAN, ..Default::default() },
            TrainConfig { lr_end: 0.0, ..Default::default() },
            TrainConfig { lr_start: 0.001, lr_end: 0.01, ..Default::default() },
        ] {
            assert!(matches!(bad.validate(), Err(EncoderError::Config(_))), "{bad:?}");
        }
    }
}
