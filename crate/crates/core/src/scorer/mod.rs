//! Autoregressive scorers: `P(next token | label, prefix)`.
//!
//! Two trainable implementations sit behind [`ScorerHandle`]: an interpolated
//! [`NgramScorer`] and a small encoder-decoder [`TransformerScorer`]. The
//! [`TableScorer`] serves hand-written conditional tables to the decoders.

mod ngram;
mod persist;
mod table;
pub mod transformer;

use std::path::Path;

use crate::{Error, Result, TokenId};

pub use ngram::{train_ngram, NgramScorer};
pub use persist::{load_scorer, save_scorer};
pub use table::TableScorer;
pub use transformer::{
    train_transformer, TrainReport, TransformerConfig, TransformerScorer,
};

/// Slack allowed on the unit sum of a [`Distribution`].
pub const SIMPLEX_TOLERANCE: f64 = 1e-6;

/// A probability vector over the vocabulary.
#[derive(Debug, Clone, PartialEq)]
pub struct Distribution {
    probs: Vec<f64>,
}

impl Distribution {
    /// Wraps `probs`, checking that they are finite, non-negative and sum to
    /// one within [`SIMPLEX_TOLERANCE`].
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::Input("empty distribution".into()));
        }
        if let Some(p) = probs.iter().find(|p| !p.is_finite() || **p < 0.0) {
            return Err(Error::Input(format!("invalid probability {p}")));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > SIMPLEX_TOLERANCE {
            return Err(Error::Input(format!("probabilities sum to {sum}")));
        }
        Ok(Distribution { probs })
    }

    /// Numerically stable softmax.
    pub fn from_logits(logits: &[f64]) -> Result<Self> {
        Distribution::new(softmax(logits))
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn prob(&self, token: TokenId) -> f64 {
        self.probs.get(token.index()).copied().unwrap_or(0.0)
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn argmax(&self) -> TokenId {
        let mut best = 0;
        for (i, p) in self.probs.iter().enumerate() {
            if *p > self.probs[best] {
                best = i;
            }
        }
        TokenId(best as u32)
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.probs
    }
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|x| (x - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// The contract every decoder relies on.
///
/// Implementations must be deterministic: the same `(label, prefix)` always
/// yields the same distribution.
pub trait Scorer: Send + Sync {
    fn vocab_size(&self) -> usize;

    fn eos(&self) -> TokenId {
        TokenId::EOS
    }

    /// Distribution of the token following `prefix`, which excludes the
    /// implicit BOS.
    fn next_distribution(&self, label: &[TokenId], prefix: &[TokenId]) -> Result<Distribution>;
}

impl<S: Scorer + ?Sized> Scorer for &S {
    fn vocab_size(&self) -> usize {
        (**self).vocab_size()
    }

    fn eos(&self) -> TokenId {
        (**self).eos()
    }

    fn next_distribution(&self, label: &[TokenId], prefix: &[TokenId]) -> Result<Distribution> {
        (**self).next_distribution(label, prefix)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScorerKind {
    Ngram,
    Transformer,
}

impl ScorerKind {
    pub fn name(self) -> &'static str {
        match self {
            ScorerKind::Ngram => "ngram",
            ScorerKind::Transformer => "transformer",
        }
    }
}

/// A trained scorer of either kind.
#[derive(Debug, Clone)]
#[allow(clippy::large_enum_variant)]
pub enum ScorerHandle {
    Ngram(NgramScorer),
    Transformer(TransformerScorer),
}

impl ScorerHandle {
    pub fn kind(&self) -> ScorerKind {
        match self {
            ScorerHandle::Ngram(_) => ScorerKind::Ngram,
            ScorerHandle::Transformer(_) => ScorerKind::Transformer,
        }
    }

    /// Pre-softmax scores of the next token. Only the transformer has them.
    pub fn forward_logits(&self, label: &[TokenId], prefix: &[TokenId]) -> Result<Vec<f64>> {
        match self {
            ScorerHandle::Ngram(_) => Err(Error::Unsupported("ngram")),
            ScorerHandle::Transformer(t) => t.forward_logits(label, prefix),
        }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        save_scorer(self, path)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        load_scorer(path)
    }

    /// Contents of a scorer file.
    pub fn to_bytes(&self) -> Vec<u8> {
        persist::to_bytes(self)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        persist::from_bytes(bytes)
    }
}

impl Scorer for ScorerHandle {
    fn vocab_size(&self) -> usize {
        match self {
            ScorerHandle::Ngram(s) => s.vocab_size(),
            ScorerHandle::Transformer(s) => s.vocab_size(),
        }
    }

    fn next_distribution(&self, label: &[TokenId], prefix: &[TokenId]) -> Result<Distribution> {
        match self {
            ScorerHandle::Ngram(s) => s.next_distribution(label, prefix),
            ScorerHandle::Transformer(s) => s.next_distribution(label, prefix),
        }
    }
}

impl From<NgramScorer> for ScorerHandle {
    fn from(s: NgramScorer) -> Self {
        ScorerHandle::Ngram(s)
    }
}

impl From<TransformerScorer> for ScorerHandle {
    fn from(s: TransformerScorer) -> Self {
        ScorerHandle::Transformer(s)
    }
}
