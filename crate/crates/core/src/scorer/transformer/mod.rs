//! A small pre-norm encoder-decoder transformer trained from scratch.
//!
//! The label is encoded; the decoder reads `[BOS] ++ prefix` with a causal
//! mask and cross-attends to the encoded label. Positions use fixed
//! sinusoidal encodings added to a shared token embedding. Everything runs in
//! `f64` on the CPU with hand-written backpropagation.

mod model;
mod ops;
mod train;

use std::fmt;

use ndarray::{s, Array2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Distribution, Scorer};
use crate::{Error, Result, TokenId};
use model::{Layout, Model};

pub use train::{train_on_sequences, train_transformer, TrainReport};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransformerConfig {
    pub d_model: usize,
    pub d_ff: usize,
    /// Width of each head's queries, keys and values.
    pub d_kv: usize,
    pub heads: usize,
    pub layers: usize,
    pub dropout: f64,
    pub lr: f64,
    pub weight_decay: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub max_src_len: usize,
    pub max_tgt_len: usize,
    pub seed: u64,
}

impl TransformerConfig {
    /// The published hyperparameters.
    pub fn paper() -> Self {
        TransformerConfig {
            d_model: 515,
            d_ff: 2038,
            d_kv: 64,
            heads: 5,
            layers: 2,
            dropout: 0.2,
            lr: 4e-4,
            weight_decay: 0.02,
            epochs: 10,
            batch_size: 53,
            max_src_len: 16,
            max_tgt_len: 64,
            seed: 0,
        }
    }

    /// Scaled down to train on a laptop CPU in minutes.
    pub fn desk() -> Self {
        TransformerConfig {
            d_model: 64,
            d_ff: 256,
            d_kv: 16,
            heads: 4,
            layers: 2,
            epochs: 120,
            batch_size: 4,
            ..TransformerConfig::paper()
        }
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "paper" => Ok(TransformerConfig::paper()),
            "desk" => Ok(TransformerConfig::desk()),
            other => Err(Error::Config(format!(
                "unknown preset {other:?}; valid presets: {}",
                Self::PRESETS.join(", ")
            ))),
        }
    }

    pub const PRESETS: [&'static str; 2] = ["paper", "desk"];

    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("d_model", self.d_model),
            ("d_ff", self.d_ff),
            ("d_kv", self.d_kv),
            ("heads", self.heads),
            ("layers", self.layers),
            ("batch_size", self.batch_size),
            ("max_src_len", self.max_src_len),
            ("max_tgt_len", self.max_tgt_len),
        ];
        if let Some((name, _)) = counts.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("{name} must be positive")));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config("dropout must lie in [0, 1)".into()));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Config("lr must be positive".into()));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(Error::Config("weight_decay must be non-negative".into()));
        }
        Ok(())
    }
}

/// An encoder-decoder scorer. Parameters are immutable once training ends.
#[derive(Clone)]
pub struct TransformerScorer {
    config: TransformerConfig,
    vocab_size: usize,
    layout: Layout,
    params: Vec<Array2<f64>>,
    trained: bool,
}

impl fmt::Debug for TransformerScorer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TransformerScorer")
            .field("config", &self.config)
            .field("vocab_size", &self.vocab_size)
            .field("parameters", &self.parameter_count())
            .field("trained", &self.trained)
            .finish()
    }
}

impl TransformerScorer {
    /// A randomly initialised, untrained model.
    pub fn new(config: TransformerConfig, vocab_size: usize) -> Result<Self> {
        config.validate()?;
        if vocab_size == 0 {
            return Err(Error::Config("vocabulary is empty".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let (layout, params) = Layout::init_params(&config, vocab_size, &mut rng);
        Ok(TransformerScorer {
            config,
            vocab_size,
            layout,
            params,
            trained: false,
        })
    }

    pub(crate) fn from_parts(
        config: TransformerConfig,
        vocab_size: usize,
        params: Vec<Array2<f64>>,
        trained: bool,
    ) -> Result<Self> {
        config.validate()?;
        let layout = Layout::new(&config, vocab_size);
        if params.len() != layout.shapes.len() {
            return Err(Error::Format(format!(
                "expected {} tensors, found {}",
                layout.shapes.len(),
                params.len()
            )));
        }
        for ((p, &shape), name) in params.iter().zip(&layout.shapes).zip(&layout.names) {
            if p.dim() != shape {
                return Err(Error::Format(format!(
                    "tensor {name} has shape {:?}, expected {shape:?}",
                    p.dim()
                )));
            }
        }
        Ok(TransformerScorer {
            config,
            vocab_size,
            layout,
            params,
            trained,
        })
    }

    pub fn config(&self) -> &TransformerConfig {
        &self.config
    }

    pub fn is_trained(&self) -> bool {
        self.trained
    }

    pub fn parameters(&self) -> &[Array2<f64>] {
        &self.params
    }

    /// Mutable access for finite-difference checks.
    pub fn parameters_mut(&mut self) -> &mut [Array2<f64>] {
        &mut self.params
    }

    pub fn parameter_names(&self) -> &[String] {
        &self.layout.names
    }

    pub fn parameter_count(&self) -> usize {
        self.params.iter().map(|p| p.len()).sum()
    }

    fn model(&self) -> Model<'_> {
        Model {
            config: &self.config,
            layout: &self.layout,
            params: &self.params,
        }
    }

    fn check(&self, ids: &[TokenId]) -> Result<Vec<usize>> {
        ids.iter()
            .map(|id| {
                if id.index() < self.vocab_size {
                    Ok(id.index())
                } else {
                    Err(Error::TokenRange {
                        id: id.0,
                        size: self.vocab_size,
                    })
                }
            })
            .collect()
    }

    /// Pre-softmax scores of the token after `prefix`.
    pub fn forward_logits(&self, label: &[TokenId], prefix: &[TokenId]) -> Result<Vec<f64>> {
        if !self.trained {
            return Err(Error::Untrained);
        }
        self.logits_unchecked(label, prefix)
    }

    fn logits_unchecked(&self, label: &[TokenId], prefix: &[TokenId]) -> Result<Vec<f64>> {
        let src = self.source(label)?;
        let mut tgt = vec![TokenId::BOS.index()];
        tgt.extend(self.check(prefix)?);
        let model = self.model();
        let cache = model.forward(&src, &tgt, None);
        let last = cache.hidden.slice(s![tgt.len() - 1.., ..]).to_owned();
        Ok(model.logits(&last).row(0).to_vec())
    }

    fn source(&self, label: &[TokenId]) -> Result<Vec<usize>> {
        let mut src = self.check(label)?;
        if src.is_empty() {
            return Err(Error::Input("label encodes to no tokens".into()));
        }
        src.truncate(self.config.max_src_len);
        Ok(src)
    }

    /// Mean token cross-entropy of `(label, target)` pairs under teacher
    /// forcing and its gradient, with dropout disabled.
    pub fn loss_and_gradients(
        &self,
        examples: &[(Vec<TokenId>, Vec<TokenId>)],
    ) -> Result<(f64, Vec<Array2<f64>>)> {
        let mut grads = self.layout.zeros();
        let prepared = examples
            .iter()
            .map(|(l, t)| train::prepare(self, l, t))
            .collect::<Result<Vec<_>>>()?;
        let total: usize = prepared.iter().map(|e| e.tgt_out.len()).sum();
        let mut loss = 0.0;
        for example in &prepared {
            let step = train::example_step(&self.model(), example, total, None, &mut grads);
            loss += step.loss_sum;
        }
        Ok((loss / total as f64, grads))
    }
}

impl Scorer for TransformerScorer {
    fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    fn next_distribution(&self, label: &[TokenId], prefix: &[TokenId]) -> Result<Distribution> {
        Distribution::from_logits(&self.forward_logits(label, prefix)?)
    }
}

#[derive(Serialize, Deserialize)]
pub(crate) struct Header {
    pub config: TransformerConfig,
    pub vocab_size: usize,
    pub trained: bool,
}

impl TransformerScorer {
    pub(crate) fn header(&self) -> Header {
        Header {
            config: self.config.clone(),
            vocab_size: self.vocab_size,
            trained: self.trained,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets() {
        let paper = TransformerConfig::preset("paper").unwrap();
        assert_eq!((paper.d_model, paper.d_ff, paper.d_kv), (515, 2038, 64));
        assert_eq!((paper.heads, paper.layers, paper.batch_size), (5, 2, 53));
        let desk = TransformerConfig::preset("desk").unwrap();
        assert_eq!((desk.d_model, desk.d_ff, desk.d_kv, desk.heads), (64, 256, 16, 4));
        let err = TransformerConfig::preset("huge").unwrap_err().to_string();
        assert!(err.contains("paper") && err.contains("desk"));
    }

    #[test]
    fn paper_shapes_need_no_divisibility() {
        let mut config = TransformerConfig::paper();
        config.layers = 1;
        config.d_model = 15;
        config.d_ff = 7;
        config.d_kv = 4;
        let scorer = TransformerScorer::new(config, 11).unwrap();
        let names = scorer.parameter_names();
        let wq = names.iter().position(|n| n == "enc0.attn.wq").unwrap();
        assert_eq!(scorer.parameters()[wq].dim(), (15, 5 * 4));
    }

    #[test]
    fn untrained_is_rejected() {
        let scorer = TransformerScorer::new(TransformerConfig::desk(), 10).unwrap();
        assert!(matches!(
            scorer.next_distribution(&[TokenId(4)], &[]),
            Err(Error::Untrained)
        ));
    }
}
