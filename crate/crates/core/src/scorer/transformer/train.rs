use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::model::{fork, Model};
use super::ops::softmax_rows;
use super::{TransformerConfig, TransformerScorer};
use crate::corpus::Record;
use crate::{Error, Result, TokenId, Vocabulary};

/// Per-epoch training curves.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Token-weighted mean cross-entropy of each epoch.
    pub loss: Vec<f64>,
    /// Fraction of target tokens whose argmax prediction was correct.
    pub token_accuracy: Vec<f64>,
}

pub(super) struct Example {
    src: Vec<usize>,
    tgt_in: Vec<usize>,
    pub(super) tgt_out: Vec<usize>,
}

/// Truncates and shifts one pair: the decoder reads `[BOS] ++ target` and
/// predicts `target ++ [EOS]`.
pub(super) fn prepare(
    scorer: &TransformerScorer,
    label: &[TokenId],
    target: &[TokenId],
) -> Result<Example> {
    let src = scorer.source(label)?;
    let mut target = scorer.check(target)?;
    target.truncate(scorer.config.max_tgt_len.saturating_sub(1));
    let mut tgt_in = vec![TokenId::BOS.index()];
    tgt_in.extend(&target);
    let mut tgt_out = target;
    tgt_out.push(TokenId::EOS.index());
    Ok(Example {
        src,
        tgt_in,
        tgt_out,
    })
}

pub(super) struct Step {
    pub(super) loss_sum: f64,
    correct: usize,
}

/// Forward and backward pass of one example. Gradients are of the summed
/// cross-entropy divided by `normalizer`.
pub(super) fn example_step(
    model: &Model,
    example: &Example,
    normalizer: usize,
    rng: Option<&mut ChaCha8Rng>,
    grads: &mut [Array2<f64>],
) -> Step {
    let cache = model.forward(&example.src, &example.tgt_in, rng);
    let mut probs = model.logits(&cache.hidden);
    softmax_rows(&mut probs);
    let mut loss_sum = 0.0;
    let mut correct = 0;
    for (row, &gold) in probs.rows().into_iter().zip(&example.tgt_out) {
        loss_sum -= row[gold].max(f64::MIN_POSITIVE).ln();
        let mut best = 0;
        for (i, &p) in row.iter().enumerate() {
            if p > row[best] {
                best = i;
            }
        }
        correct += usize::from(best == gold);
    }
    let mut dlogits = probs;
    for (i, &gold) in example.tgt_out.iter().enumerate() {
        dlogits[[i, gold]] -= 1.0;
    }
    dlogits /= normalizer as f64;
    model.backward(&cache, &dlogits, grads);
    Step { loss_sum, correct }
}

struct AdamW {
    m: Vec<Array2<f64>>,
    v: Vec<Array2<f64>>,
    t: i32,
}

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

impl AdamW {
    fn step(
        &mut self,
        params: &mut [Array2<f64>],
        grads: &[Array2<f64>],
        decay: &[bool],
        lr: f64,
        weight_decay: f64,
    ) {
        self.t += 1;
        let c1 = 1.0 - BETA1.powi(self.t);
        let c2 = 1.0 - BETA2.powi(self.t);
        for i in 0..params.len() {
            let wd = if decay[i] { lr * weight_decay } else { 0.0 };
            ndarray::Zip::from(&mut params[i])
                .and(&mut self.m[i])
                .and(&mut self.v[i])
                .and(&grads[i])
                .for_each(|p, m, v, &g| {
                    *m = BETA1 * *m + (1.0 - BETA1) * g;
                    *v = BETA2 * *v + (1.0 - BETA2) * g * g;
                    let update = (*m / c1) / ((*v / c2).sqrt() + ADAM_EPS);
                    *p -= lr * update + wd * *p;
                });
        }
    }
}

/// Trains with teacher forcing, mean token cross-entropy and AdamW.
///
/// Deterministic given `config.seed`. With `epochs = 0` the returned scorer
/// is untrained and refuses to score.
pub fn train_transformer(
    corpus: &[Record],
    vocab: &Vocabulary,
    config: &TransformerConfig,
) -> Result<(TransformerScorer, TrainReport)> {
    if corpus.is_empty() {
        return Err(Error::Training("empty corpus".into()));
    }
    let pairs: Vec<_> = corpus
        .iter()
        .map(|r| (vocab.encode(&r.label), vocab.encode(&r.instruction)))
        .collect();
    train_on_sequences(&pairs, vocab.len(), config)
}

/// [`train_transformer`] over already-encoded `(label, target)` pairs.
pub fn train_on_sequences(
    pairs: &[(Vec<TokenId>, Vec<TokenId>)],
    vocab_size: usize,
    config: &TransformerConfig,
) -> Result<(TransformerScorer, TrainReport)> {
    let mut scorer = TransformerScorer::new(config.clone(), vocab_size)?;
    let examples = pairs
        .iter()
        .map(|(l, t)| prepare(&scorer, l, t))
        .collect::<Result<Vec<_>>>()?;
    if examples.is_empty() {
        return Err(Error::Training("empty corpus".into()));
    }
    // Stream 1 keeps shuffling and dropout apart from initialisation draws.
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(1);
    let mut optimizer = AdamW {
        m: scorer.layout.zeros(),
        v: scorer.layout.zeros(),
        t: 0,
    };
    let mut report = TrainReport::default();
    let mut order: Vec<usize> = (0..examples.len()).collect();
    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        let mut epoch_correct = 0;
        let mut epoch_tokens = 0;
        for batch in order.chunks(config.batch_size) {
            let tokens: usize = batch.iter().map(|&i| examples[i].tgt_out.len()).sum();
            let mut grads = scorer.layout.zeros();
            let model = scorer.model();
            for &i in batch {
                let mut dropout_rng = fork(&mut rng);
                let step = example_step(&model, &examples[i], tokens, Some(&mut dropout_rng), &mut grads);
                epoch_loss += step.loss_sum;
                epoch_correct += step.correct;
            }
            epoch_tokens += tokens;
            if !epoch_loss.is_finite() {
                return Err(Error::Diverged {
                    epoch,
                    loss: epoch_loss,
                });
            }
            optimizer.step(
                &mut scorer.params,
                &grads,
                &scorer.layout.decay,
                config.lr,
                config.weight_decay,
            );
        }
        let loss = epoch_loss / epoch_tokens as f64;
        if !loss.is_finite() || scorer.params.iter().any(|p| p.iter().any(|x| !x.is_finite())) {
            return Err(Error::Diverged { epoch, loss });
        }
        log::debug!("epoch {epoch}: loss {loss:.4}");
        report.loss.push(loss);
        report
            .token_accuracy
            .push(epoch_correct as f64 / epoch_tokens as f64);
    }
    scorer.trained = config.epochs > 0;
    Ok((scorer, report))
}
