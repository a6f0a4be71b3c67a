use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use super::{Distribution, Scorer};
use crate::corpus::Record;
use crate::{Error, Result, TokenId, Vocabulary};

/// Probability mass spread uniformly over the vocabulary before
/// renormalisation, so no token is ever impossible.
pub const FLOOR: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NgramConfig {
    pub vocab_size: usize,
    pub order: usize,
    pub weights: Vec<f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
struct Row {
    total: u64,
    next: Vec<(TokenId, u64)>,
}

/// Linear interpolation of maximum-likelihood estimates of orders
/// `1..=order`, conditioned on the label by prefixing it to every sequence.
///
/// The history of a target token is `label ++ [BOS] ++ prefix`. Orders whose
/// context never occurred in training are dropped and the remaining weights
/// renormalised.
#[derive(Debug, Clone, PartialEq)]
pub struct NgramScorer {
    config: NgramConfig,
    // tables[i] maps a context of length i to next-token counts.
    tables: Vec<HashMap<Vec<TokenId>, Row>>,
}

impl NgramScorer {
    /// Weights proportional to `10^0, 10^1, ..., 10^(order-1)`. Lower orders
    /// only back off; a heavy unigram share makes `<eos>` likely everywhere
    /// and the decoder stops after a few tokens.
    pub fn default_weights(order: usize) -> Vec<f64> {
        let raw: Vec<f64> = (0..order).map(|i| 10f64.powi(i as i32)).collect();
        let total: f64 = raw.iter().sum();
        raw.into_iter().map(|w| w / total).collect()
    }

    /// Counts n-grams over already-encoded `(label, target)` pairs.
    pub fn from_sequences(
        vocab_size: usize,
        order: usize,
        weights: Vec<f64>,
        sequences: &[(Vec<TokenId>, Vec<TokenId>)],
    ) -> Result<Self> {
        let config = NgramConfig {
            vocab_size,
            order,
            weights,
        };
        validate(&config)?;
        if sequences.is_empty() {
            return Err(Error::Training("empty corpus".into()));
        }
        let mut counts: Vec<BTreeMap<Vec<TokenId>, BTreeMap<TokenId, u64>>> =
            vec![BTreeMap::new(); order];
        for (label, target) in sequences {
            let mut history: Vec<TokenId> = label.clone();
            history.push(TokenId::BOS);
            let offset = history.len();
            history.extend(target);
            history.push(TokenId::EOS);
            for &t in &history {
                if t.index() >= vocab_size {
                    return Err(Error::TokenRange {
                        id: t.0,
                        size: vocab_size,
                    });
                }
            }
            for pos in offset..history.len() {
                for (ctx_len, table) in counts.iter_mut().enumerate() {
                    if ctx_len > pos {
                        break;
                    }
                    let context = history[pos - ctx_len..pos].to_vec();
                    *table
                        .entry(context)
                        .or_default()
                        .entry(history[pos])
                        .or_default() += 1;
                }
            }
        }
        let tables = counts
            .into_iter()
            .map(|table| {
                table
                    .into_iter()
                    .map(|(ctx, next)| {
                        let total = next.values().sum();
                        (
                            ctx,
                            Row {
                                total,
                                next: next.into_iter().collect(),
                            },
                        )
                    })
                    .collect()
            })
            .collect();
        Ok(NgramScorer { config, tables })
    }

    pub fn config(&self) -> &NgramConfig {
        &self.config
    }

    pub fn order(&self) -> usize {
        self.config.order
    }

    /// Interpolated probabilities before the floor is applied.
    fn raw_probs(&self, history: &[TokenId]) -> Vec<f64> {
        let mut probs = vec![0.0; self.config.vocab_size];
        let mut used_weight = 0.0;
        for (ctx_len, table) in self.tables.iter().enumerate() {
            let weight = self.config.weights[ctx_len];
            if ctx_len > history.len() || weight == 0.0 {
                continue;
            }
            let Some(row) = table.get(&history[history.len() - ctx_len..]) else {
                continue;
            };
            used_weight += weight;
            for &(token, count) in &row.next {
                probs[token.index()] += weight * count as f64 / row.total as f64;
            }
        }
        if used_weight > 0.0 {
            for p in &mut probs {
                *p /= used_weight;
            }
        } else {
            probs.fill(1.0 / self.config.vocab_size as f64);
        }
        probs
    }

    pub(crate) fn to_payload(&self) -> NgramPayload {
        let tables = self
            .tables
            .iter()
            .map(|table| {
                let sorted: BTreeMap<&Vec<TokenId>, &Row> = table.iter().collect();
                sorted
                    .into_iter()
                    .map(|(ctx, row)| (ctx.clone(), row.next.clone()))
                    .collect()
            })
            .collect();
        NgramPayload { tables }
    }

    pub(crate) fn from_payload(config: NgramConfig, payload: NgramPayload) -> Result<Self> {
        validate(&config)?;
        if payload.tables.len() != config.order {
            return Err(Error::Format(format!(
                "expected {} count tables, found {}",
                config.order,
                payload.tables.len()
            )));
        }
        let tables = payload
            .tables
            .into_iter()
            .map(|rows| {
                rows.into_iter()
                    .map(|(ctx, next)| {
                        let total = next.iter().map(|(_, c)| c).sum();
                        (ctx, Row { total, next })
                    })
                    .collect()
            })
            .collect();
        Ok(NgramScorer { config, tables })
    }
}

/// One context and its continuation counts.
type ContextRow = (Vec<TokenId>, Vec<(TokenId, u64)>);

#[derive(Debug, Serialize, Deserialize)]
pub(crate) struct NgramPayload {
    tables: Vec<Vec<ContextRow>>,
}

fn validate(config: &NgramConfig) -> Result<()> {
    if config.order == 0 {
        return Err(Error::Config("n-gram order must be at least 1".into()));
    }
    if config.vocab_size == 0 {
        return Err(Error::Config("vocabulary is empty".into()));
    }
    if config.weights.len() != config.order {
        return Err(Error::Config(format!(
            "{} interpolation weights given for order {}",
            config.weights.len(),
            config.order
        )));
    }
    if config.weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
        return Err(Error::Config("interpolation weights must be non-negative".into()));
    }
    let sum: f64 = config.weights.iter().sum();
    if (sum - 1.0).abs() > 1e-6 {
        return Err(Error::Config(format!(
            "interpolation weights sum to {sum}, not 1"
        )));
    }
    Ok(())
}

impl Scorer for NgramScorer {
    fn vocab_size(&self) -> usize {
        self.config.vocab_size
    }

    fn next_distribution(&self, label: &[TokenId], prefix: &[TokenId]) -> Result<Distribution> {
        let mut history = Vec::with_capacity(label.len() + prefix.len() + 1);
        history.extend_from_slice(label);
        history.push(TokenId::BOS);
        history.extend_from_slice(prefix);
        let v = self.config.vocab_size as f64;
        let probs = self
            .raw_probs(&history)
            .into_iter()
            .map(|p| (p + FLOOR) / (1.0 + v * FLOOR))
            .collect();
        Distribution::new(probs)
    }
}

/// Encodes `corpus` with `vocab` and counts n-grams over it.
pub fn train_ngram(
    corpus: &[Record],
    vocab: &Vocabulary,
    order: usize,
    weights: Vec<f64>,
) -> Result<NgramScorer> {
    let sequences: Vec<_> = corpus
        .iter()
        .map(|r| (vocab.encode(&r.label), vocab.encode(&r.instruction)))
        .collect();
    NgramScorer::from_sequences(vocab.len(), order, weights, &sequences)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(ids: &[u32]) -> Vec<TokenId> {
        ids.iter().map(|&i| TokenId(i)).collect()
    }

    #[test]
    fn seen_prefix_predicts_observed_token() {
        let scorer =
            NgramScorer::from_sequences(8, 3, NgramScorer::default_weights(3), &[(t(&[4]), t(&[5, 6, 7]))])
                .unwrap();
        let dist = scorer.next_distribution(&t(&[4]), &t(&[5])).unwrap();
        assert_eq!(dist.argmax(), TokenId(6));
        let dist = scorer.next_distribution(&t(&[4]), &t(&[5, 6, 7])).unwrap();
        assert_eq!(dist.argmax(), TokenId::EOS);
        assert!(dist.probs().iter().all(|&p| p > 0.0));
    }

    #[test]
    fn unigram_ignores_prefix() {
        let data = [(t(&[4]), t(&[5, 5, 6])), (t(&[7]), t(&[6]))];
        let scorer = NgramScorer::from_sequences(8, 1, vec![1.0], &data).unwrap();
        let a = scorer.next_distribution(&t(&[4]), &[]).unwrap();
        let b = scorer.next_distribution(&t(&[7]), &t(&[5, 6])).unwrap();
        assert_eq!(a, b);
        // targets: 5 5 6 EOS 6 EOS -> counts 5:2, 6:2, EOS:2 of 6
        let floor = |p: f64| (p + FLOOR) / (1.0 + 8.0 * FLOOR);
        assert!((a.prob(TokenId(5)) - floor(2.0 / 6.0)).abs() < 1e-15);
        assert!((a.prob(TokenId(0)) - floor(0.0)).abs() < 1e-20);
    }

    #[test]
    fn unseen_context_falls_back_to_unigram() {
        let data = [(t(&[4]), t(&[5, 6]))];
        let bigram = NgramScorer::from_sequences(8, 2, vec![0.3, 0.7], &data).unwrap();
        let unigram = NgramScorer::from_sequences(8, 1, vec![1.0], &data).unwrap();
        let unseen = bigram.next_distribution(&t(&[4]), &t(&[7])).unwrap();
        let expected = unigram.next_distribution(&t(&[4]), &t(&[7])).unwrap();
        for (a, b) in unseen.probs().iter().zip(expected.probs()) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn config_errors() {
        let data = [(t(&[4]), t(&[5]))];
        assert!(NgramScorer::from_sequences(8, 0, vec![], &data).is_err());
        assert!(NgramScorer::from_sequences(8, 2, vec![1.0], &data).is_err());
        assert!(NgramScorer::from_sequences(8, 2, vec![0.6, 0.6], &data).is_err());
        assert!(matches!(
            NgramScorer::from_sequences(8, 1, vec![1.0], &[]),
            Err(Error::Training(_))
        ));
        assert!(matches!(
            NgramScorer::from_sequences(4, 1, vec![1.0], &data),
            Err(Error::TokenRange { .. })
        ));
    }
}
