#![allow(dead_code)]

use labelgen::decode::{DecodeConfig, StopRule};
use labelgen::scorer::NgramScorer;
use labelgen::TokenId;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// First id after the four specials.
pub const FIRST_WORD: u32 = 4;

/// A small n-gram scorer counted from random sequences. Word ids lie in
/// `4..vocab_size`; repeats are common because the alphabet is tiny.
pub fn random_ngram(seed: u64, vocab_size: usize) -> NgramScorer {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let order = rng.random_range(1..=3);
    let raw: Vec<f64> = (0..order).map(|_| rng.random_range(0.05..1.0)).collect();
    let total: f64 = raw.iter().sum();
    let weights = raw.iter().map(|w| w / total).collect();
    let word = |rng: &mut ChaCha8Rng| TokenId(rng.random_range(FIRST_WORD..vocab_size as u32));
    let sequences: Vec<(Vec<TokenId>, Vec<TokenId>)> = (0..rng.random_range(2..8))
        .map(|_| {
            let label = vec![word(&mut rng)];
            let len = rng.random_range(0..6);
            let target = (0..len).map(|_| word(&mut rng)).collect();
            (label, target)
        })
        .collect();
    NgramScorer::from_sequences(vocab_size, order, weights, &sequences)
        .expect("random scorer is valid")
}

/// Beam as wide as the vocabulary, frontier as large as the tree, no pruning
/// and no budget.
pub fn exhaustive_config(vocab_size: usize, max_len: usize, nb_output: usize, alpha: f64) -> DecodeConfig {
    DecodeConfig {
        n: vocab_size,
        m: vocab_size.pow(max_len as u32),
        p_b: Some(1.0),
        alpha,
        max_len,
        nb_output,
        step_budget: Some(usize::MAX),
        stop_rule: if alpha == 0.0 {
            StopRule::BestFrontier
        } else {
            StopRule::UpperBound
        },
        ..DecodeConfig::default()
    }
}

pub fn has_repeat(tokens: &[TokenId], window: usize) -> bool {
    (1..tokens.len()).any(|i| tokens[i.saturating_sub(window - 1)..i].contains(&tokens[i]))
}
