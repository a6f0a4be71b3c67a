mod common;

use std::collections::BTreeMap;

use common::random_ngram;
use labelgen::corpus::Record;
use labelgen::scorer::transformer::train_on_sequences;
use labelgen::scorer::{
    softmax, train_ngram, train_transformer, NgramScorer, Scorer, ScorerHandle, TransformerConfig,
    TransformerScorer,
};
use labelgen::{Error, TokenId, Vocabulary};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn t(ids: &[u32]) -> Vec<TokenId> {
    ids.iter().map(|&i| TokenId(i)).collect()
}

fn tiny_config() -> TransformerConfig {
    TransformerConfig {
        d_model: 8,
        d_ff: 12,
        d_kv: 3,
        heads: 2,
        layers: 1,
        dropout: 0.0,
        epochs: 3,
        batch_size: 2,
        max_src_len: 6,
        max_tgt_len: 8,
        seed: 11,
        ..TransformerConfig::desk()
    }
}

fn two_records() -> Vec<(Vec<TokenId>, Vec<TokenId>)> {
    vec![(t(&[4, 5]), t(&[6, 7, 8])), (t(&[9]), t(&[8, 6, 6, 7]))]
}

fn assert_simplex(probs: &[f64]) {
    assert!(probs.iter().all(|&p| p > 0.0 && p.is_finite()));
    assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-6);
}

/// Next-token distribution recounted from the raw sequences: every order
/// whose context occurs in training contributes its weight times the
/// relative frequency, the used weights are renormalised, and the 1e-9 floor
/// is spread and renormalised.
fn ngram_oracle(
    sequences: &[(Vec<TokenId>, Vec<TokenId>)],
    vocab_size: usize,
    weights: &[f64],
    label: &[TokenId],
    prefix: &[TokenId],
) -> Vec<f64> {
    let mut history = label.to_vec();
    history.push(TokenId::BOS);
    history.extend_from_slice(prefix);
    let mut mixed = vec![0.0; vocab_size];
    let mut used = 0.0;
    for (ctx_len, &w) in weights.iter().enumerate() {
        if ctx_len > history.len() || w == 0.0 {
            continue;
        }
        let context = &history[history.len() - ctx_len..];
        let mut counts: BTreeMap<TokenId, f64> = BTreeMap::new();
        for (l, target) in sequences {
            let mut full = l.clone();
            full.push(TokenId::BOS);
            let start = full.len();
            full.extend(target);
            full.push(TokenId::EOS);
            for pos in start.max(ctx_len)..full.len() {
                if &full[pos - ctx_len..pos] == context {
                    *counts.entry(full[pos]).or_default() += 1.0;
                }
            }
        }
        let total: f64 = counts.values().sum();
        if total == 0.0 {
            continue;
        }
        used += w;
        for (tok, c) in counts {
            mixed[tok.index()] += w * c / total;
        }
    }
    let v = vocab_size as f64;
    mixed
        .iter()
        .map(|&p| if used > 0.0 { p / used } else { 1.0 / v })
        .map(|p| (p + 1e-9) / (1.0 + v * 1e-9))
        .collect()
}

#[test]
fn ngram_matches_count_oracle() {
    let sequences = vec![
        (t(&[4]), t(&[5, 6, 5, 7])),
        (t(&[4]), t(&[5, 6, 8])),
        (t(&[9]), t(&[6, 5, 7])),
    ];
    let weights = [0.2, 0.3, 0.5];
    let scorer = NgramScorer::from_sequences(10, 3, weights.to_vec(), &sequences).unwrap();
    let probes = [
        (t(&[4]), t(&[])),
        (t(&[4]), t(&[5])),
        (t(&[4]), t(&[5, 6])),
        (t(&[9]), t(&[6, 5])),
        (t(&[8]), t(&[8, 8])),
        (t(&[4]), t(&[7, 7, 9])),
    ];
    for (label, prefix) in probes {
        let got = scorer.next_distribution(&label, &prefix).unwrap();
        let want = ngram_oracle(&sequences, 10, &weights, &label, &prefix);
        for (g, w) in got.probs().iter().zip(&want) {
            assert!((g - w).abs() < 1e-12, "{label:?} {prefix:?}: {g} vs {w}");
        }
    }
    // Seen prefix: the observed continuation wins.
    let d = scorer.next_distribution(&t(&[4]), &t(&[5, 6])).unwrap();
    assert!([TokenId(5), TokenId(8)].contains(&d.argmax()));
}

#[test]
fn unigram_model_ignores_the_prefix() {
    let sequences = vec![(t(&[4]), t(&[5, 5, 6]))];
    let scorer = NgramScorer::from_sequences(8, 1, vec![1.0], &sequences).unwrap();
    let a = scorer.next_distribution(&t(&[4]), &t(&[])).unwrap();
    let b = scorer.next_distribution(&t(&[7]), &t(&[6, 6])).unwrap();
    assert_eq!(a, b);
    // counts: 5 twice, 6 once, EOS once
    let expected = (0.5 + 1e-9) / (1.0 + 8.0 * 1e-9);
    assert!((a.prob(TokenId(5)) - expected).abs() < 1e-15);
}

#[test]
fn transformer_gradients_match_central_differences() {
    let examples = two_records();
    let mut scorer = TransformerScorer::new(tiny_config(), 10).unwrap();
    let (_, grads) = scorer.loss_and_gradients(&examples).unwrap();
    let names = scorer.parameter_names().to_vec();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let h = 1e-4;
    let mut checked = 0;
    for (k, name) in names.iter().enumerate() {
        let shape = scorer.parameters()[k].dim();
        for _ in 0..5 {
            let idx = (rng.random_range(0..shape.0), rng.random_range(0..shape.1));
            let original = scorer.parameters()[k][idx];
            scorer.parameters_mut()[k][idx] = original + h;
            let (up, _) = scorer.loss_and_gradients(&examples).unwrap();
            scorer.parameters_mut()[k][idx] = original - h;
            let (down, _) = scorer.loss_and_gradients(&examples).unwrap();
            scorer.parameters_mut()[k][idx] = original;
            let numeric = (up - down) / (2.0 * h);
            let analytic = grads[k][idx];
            let scale = analytic.abs().max(numeric.abs());
            if scale < 1e-8 {
                continue;
            }
            let rel = (analytic - numeric).abs() / scale;
            assert!(rel < 1e-3, "{name}{idx:?}: analytic {analytic} numeric {numeric}");
            checked += 1;
        }
    }
    assert!(checked >= 5 * names.len() / 2, "only {checked} entries had a gradient");
}

#[test]
fn transformer_logits_and_distribution_agree() {
    let (scorer, report) = train_on_sequences(&two_records(), 10, &tiny_config()).unwrap();
    assert_eq!(report.loss.len(), 3);
    assert_eq!(report.token_accuracy.len(), 3);
    for prefix in [t(&[]), t(&[6]), t(&[8, 6, 6])] {
        let logits = scorer.forward_logits(&t(&[4, 5]), &prefix).unwrap();
        let dist = scorer.next_distribution(&t(&[4, 5]), &prefix).unwrap();
        let probs = softmax(&logits);
        assert_simplex(dist.probs());
        for (a, b) in probs.iter().zip(dist.probs()) {
            assert!((a - b).abs() < 1e-6);
        }
        let shifted: Vec<f64> = logits.iter().map(|x| x + 7.5).collect();
        for (a, b) in softmax(&shifted).iter().zip(&probs) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}

#[test]
fn transformer_training_is_deterministic_and_learns() {
    let records: Vec<Record> = (0..6)
        .map(|i| Record::new(format!("drug{i}"), format!("drug{i} {} mg Tablet PO daily", 10 * (i + 1))).unwrap())
        .collect();
    let texts: Vec<&str> = records.iter().flat_map(|r| [r.label.as_str(), r.instruction.as_str()]).collect();
    let vocab = Vocabulary::train(&texts, 60, 1).unwrap();
    let config = TransformerConfig {
        epochs: 10,
        ..tiny_config()
    };
    let (a, ra) = train_transformer(&records, &vocab, &config).unwrap();
    let (b, rb) = train_transformer(&records, &vocab, &config).unwrap();
    assert_eq!(ra, rb);
    assert_eq!(a.parameters(), b.parameters());
    assert!(ra.loss.last().unwrap() < ra.loss.first().unwrap());

    let untrained = TransformerConfig { epochs: 0, ..config };
    let (scorer, report) = train_transformer(&records, &vocab, &untrained).unwrap();
    assert!(report.loss.is_empty() && report.token_accuracy.is_empty());
    assert!(matches!(scorer.next_distribution(&[TokenId(4)], &[]), Err(Error::Untrained)));
}

#[test]
fn forward_logits_is_transformer_only() {
    let handle = ScorerHandle::from(random_ngram(1, 8));
    assert!(matches!(handle.forward_logits(&[TokenId(4)], &[]), Err(Error::Unsupported(_))));
}

#[test]
fn scorer_files_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let (transformer, _) = train_on_sequences(&two_records(), 10, &tiny_config()).unwrap();
    let handles = [ScorerHandle::from(random_ngram(2, 10)), ScorerHandle::from(transformer)];
    let probes = [(t(&[4, 5]), t(&[])), (t(&[9]), t(&[8, 6])), (t(&[4]), t(&[7, 7, 7]))];
    for (i, handle) in handles.iter().enumerate() {
        let path = dir.path().join(format!("s{i}.bin"));
        handle.save(&path).unwrap();
        let loaded = ScorerHandle::load(&path).unwrap();
        assert_eq!(loaded.kind(), handle.kind());
        for (label, prefix) in &probes {
            let a = handle.next_distribution(label, prefix).unwrap();
            let b = loaded.next_distribution(label, prefix).unwrap();
            let bits = |d: &labelgen::scorer::Distribution| d.probs().iter().map(|p| p.to_bits()).collect::<Vec<_>>();
            assert_eq!(bits(&a), bits(&b));
        }
        assert_eq!(loaded.to_bytes(), handle.to_bytes());

        let bytes = handle.to_bytes();
        for cut in [0, 5, 12, bytes.len() / 2, bytes.len() - 1] {
            assert!(matches!(ScorerHandle::from_bytes(&bytes[..cut]), Err(Error::Format(_))), "cut {cut}");
        }
        let mut versioned = bytes.clone();
        versioned[8] = versioned[8].wrapping_add(1);
        assert!(matches!(ScorerHandle::from_bytes(&versioned), Err(Error::Format(_))));
    }
    let ngram_path = dir.path().join("s0.bin");
    assert!(matches!(
        TransformerScorer::load(&ngram_path),
        Err(Error::KindMismatch { expected: "transformer", found: "ngram" })
    ));
    assert!(NgramScorer::load(&ngram_path).is_ok());
}

#[test]
fn ngram_training_requires_records() {
    let vocab = Vocabulary::train(&["a b"], 20, 1).unwrap();
    assert!(matches!(train_ngram(&[], &vocab, 2, vec![0.5, 0.5]), Err(Error::Training(_))));
}

proptest! {
    #[test]
    fn every_distribution_is_a_positive_simplex(
        seed in any::<u64>(),
        vocab in 5usize..16,
        prefix in prop::collection::vec(0u32..16, 0..6),
    ) {
        let scorer = random_ngram(seed, vocab);
        let prefix: Vec<TokenId> = prefix.into_iter().map(|i| TokenId(i % vocab as u32)).collect();
        let dist = scorer.next_distribution(&[TokenId(4)], &prefix).unwrap();
        prop_assert_eq!(dist.len(), vocab);
        assert_simplex(dist.probs());
    }
}
