mod common;

use common::{exhaustive_config, has_repeat, random_ngram, FIRST_WORD};
use labelgen::decode::{
    b2sd, exhaustive_topk, fixture, greedy_bsd, length_penalty, DecodeConfig, Hypothesis,
    StopRule, Termination,
};
use labelgen::scorer::{Scorer, TableScorer};
use labelgen::{Error, TokenId};
use proptest::prelude::*;

const LABEL: [TokenId; 1] = [TokenId(FIRST_WORD)];

fn shape(seed: u64) -> (usize, usize, usize) {
    let vocab = 6 + (seed % 7) as usize;
    let max_len = 1 + (seed / 7 % 5) as usize;
    let nb_output = 1 + (seed / 35 % 4) as usize;
    (vocab, max_len, nb_output)
}

fn tokens(hyps: &[Hypothesis]) -> Vec<Vec<TokenId>> {
    hyps.iter().map(|h| h.tokens.clone()).collect()
}

/// Recomputes a hypothesis score from the scorer alone: token log
/// probabilities are summed, and whenever a token already occurs in the
/// preceding `window - 1` positions the running joint is raised to `2 - 0.5 p`.
fn rescore(scorer: &impl Scorer, tokens: &[TokenId], window: usize) -> (f64, f64) {
    let mut penalised = 0.0;
    let mut plain = 0.0;
    for i in 0..tokens.len() {
        let p = scorer.next_distribution(&LABEL, &tokens[..i]).unwrap().prob(tokens[i]);
        let lookback = &tokens[i.saturating_sub(window - 1)..i];
        plain += p.ln();
        penalised += p.ln();
        if lookback.contains(&tokens[i]) {
            penalised *= 2.0 - 0.5 * p;
        }
    }
    (penalised, plain)
}

fn check_oracle(alpha: f64, seeds: std::ops::Range<u64>) {
    let mut with_repeats = 0;
    for seed in seeds {
        let (vocab, max_len, nb_output) = shape(seed);
        let scorer = random_ngram(seed, vocab);
        let config = exhaustive_config(vocab, max_len, nb_output, alpha);
        let (found, _) = b2sd(&scorer, &LABEL, &config).unwrap();
        let expected = exhaustive_topk(&scorer, &LABEL, max_len, nb_output, alpha, config.repeat_window).unwrap();
        assert_eq!(tokens(&found), tokens(&expected), "seed {seed} vocab {vocab} max_len {max_len}");
        for (f, e) in found.iter().zip(&expected) {
            assert_eq!(f.heuristic, e.heuristic, "seed {seed}");
        }
        with_repeats += found.iter().filter(|h| has_repeat(&h.tokens, config.repeat_window)).count();
    }
    assert!(with_repeats > 0, "no returned hypothesis exercised the repeat penalty");
}

#[test]
fn b2sd_matches_exhaustive_search_without_length_normalisation() {
    check_oracle(0.0, 0..120);
}

#[test]
fn b2sd_matches_exhaustive_search_with_length_normalisation() {
    check_oracle(0.6, 1000..1120);
}

#[test]
fn worked_example_joint_probabilities_and_vertex_counts() {
    let (vocab, scorer) = fixture::worked_example();
    let config = fixture::config();
    let (found, stats) = b2sd(&scorer, &[], &config).unwrap();
    let text: Vec<String> = found.iter().map(|h| vocab.decode(&h.tokens).unwrap()).collect();
    assert_eq!(text, ["I am twelve", "You are twelve"]);
    assert!((found[0].joint_probability() - 0.138).abs() < 1e-6);
    assert!((found[1].joint_probability() - 0.135).abs() < 1e-6);
    assert_eq!(stats.vertices_explored, 7);
    assert_eq!(stats.dead_ends, 1);

    let (greedy, greedy_stats) = greedy_bsd(&scorer, &[], &config).unwrap();
    let text: Vec<String> = greedy.iter().map(|h| vocab.decode(&h.tokens).unwrap()).collect();
    assert_eq!(text, ["I am twelve", "I have scored"]);
    assert_eq!(greedy_stats.vertices_explored, 6);

    // The two optima really are the global top two.
    let best = exhaustive_topk(&scorer, &[], 6, 2, config.alpha, config.repeat_window).unwrap();
    assert_eq!(tokens(&best), tokens(&found));
}

fn three_way_table() -> TableScorer {
    let [a, b, c] = [4, 5, 6].map(TokenId);
    let eos = [(TokenId::EOS, 1.0)];
    TableScorer::new(7)
        .with(&[], &[(a, 0.5), (b, 0.3), (c, 0.2)])
        .and_then(|t| t.with(&[a], &eos))
        .and_then(|t| t.with(&[b], &eos))
        .and_then(|t| t.with(&[c], &eos))
        .unwrap()
}

#[test]
fn p_b_half_prunes_below_a_quarter() {
    let scorer = three_way_table();
    let mut config = DecodeConfig {
        n: 3,
        nb_output: 3,
        m: 9,
        p_b: Some(0.5),
        ..DecodeConfig::default()
    };
    let (found, _) = b2sd(&scorer, &[], &config).unwrap();
    let firsts: Vec<u32> = found.iter().map(|h| h.tokens[0].0).collect();
    assert_eq!(firsts, [4, 5]);

    config.p_b = Some(1.0);
    let (found, _) = b2sd(&scorer, &[], &config).unwrap();
    assert_eq!(found.len(), 3);
}

#[test]
fn p_b_one_prunes_nothing() {
    for seed in 0..20 {
        let scorer = random_ngram(500 + seed, 10);
        let on = DecodeConfig {
            max_len: 6,
            nb_output: 3,
            m: 9,
            ..DecodeConfig::default()
        };
        let off = DecodeConfig { p_b: None, ..on.clone() };
        let (a, sa) = b2sd(&scorer, &LABEL, &on).unwrap();
        let (b, sb) = b2sd(&scorer, &LABEL, &off).unwrap();
        assert_eq!(a, b, "seed {seed}");
        assert_eq!(sa.vertices_explored, sb.vertices_explored);
    }
}

#[test]
fn greedy_with_unit_beam_follows_the_argmax() {
    for seed in 0..10 {
        let scorer = random_ngram(seed, 9);
        let config = DecodeConfig {
            n: 1,
            m: 3,
            max_len: 6,
            ..DecodeConfig::default()
        };
        let (found, _) = greedy_bsd(&scorer, &LABEL, &config).unwrap();
        let mut expected = Vec::new();
        while expected.len() < config.max_len && expected.last() != Some(&TokenId::EOS) {
            expected.push(scorer.next_distribution(&LABEL, &expected).unwrap().argmax());
        }
        assert_eq!(found[0].tokens, expected, "seed {seed}");
    }
}

#[test]
fn forced_sequence_is_found_by_every_search() {
    let w = TokenId(4);
    let scorer = TableScorer::new(5)
        .with(&[], &[(w, 1.0)])
        .and_then(|t| t.with(&[w], &[(w, 1.0)]))
        .and_then(|t| t.with(&[w, w], &[(TokenId::EOS, 1.0)]))
        .unwrap();
    let config = DecodeConfig::default();
    let (a, _) = b2sd(&scorer, &[], &config).unwrap();
    let (b, _) = greedy_bsd(&scorer, &[], &config).unwrap();
    let c = exhaustive_topk(&scorer, &[], 3, 1, config.alpha, config.repeat_window).unwrap();
    assert_eq!(a, b);
    assert_eq!(tokens(&a), tokens(&c));
    assert_eq!(a[0].tokens, [w, w, TokenId::EOS]);
    // The repeated token has probability one, so the penalty leaves p(Y) = 1.
    assert_eq!(a[0].log_joint, 0.0);
}

#[test]
fn exact_ties_rank_lexicographically() {
    let [a, b] = [4, 5].map(TokenId);
    let eos = [(TokenId::EOS, 1.0)];
    let scorer = TableScorer::new(6)
        .with(&[], &[(b, 0.5), (a, 0.5)])
        .and_then(|t| t.with(&[a], &eos))
        .and_then(|t| t.with(&[b], &eos))
        .unwrap();
    let found = exhaustive_topk(&scorer, &[], 2, 2, 0.6, 4).unwrap();
    assert_eq!(found[0].tokens, [a, TokenId::EOS]);
    assert_eq!(found[1].tokens, [b, TokenId::EOS]);
}

#[test]
fn exhaustive_refuses_huge_spaces() {
    let scorer = random_ngram(1, 12);
    let err = exhaustive_topk(&scorer, &LABEL, 8, 1, 0.6, 4).unwrap_err();
    assert!(matches!(err, Error::Capacity(_)), "{err}");
}

#[test]
fn budget_exhaustion_carries_stats() {
    let scorer = random_ngram(3, 10);
    let config = DecodeConfig {
        max_len: 10,
        step_budget: Some(1),
        ..DecodeConfig::default()
    };
    match b2sd(&scorer, &LABEL, &config) {
        Err(Error::SearchExhausted { stats }) => {
            assert_eq!(stats.termination, Termination::Budget);
            assert_eq!(stats.vertices_explored, 0);
        }
        // Expanding the root may already finish a sequence.
        Ok((found, stats)) => {
            assert!(found.iter().all(|h| h.tokens == [TokenId::EOS]));
            assert_eq!(stats.vertices_explored, 0);
        }
        Err(e) => panic!("unexpected error {e}"),
    }
}

#[test]
fn greedy_rejects_more_outputs_than_beams() {
    let scorer = random_ngram(3, 8);
    let config = DecodeConfig {
        n: 4,
        nb_output: 8,
        m: 24,
        ..DecodeConfig::default()
    };
    assert!(matches!(greedy_bsd(&scorer, &LABEL, &config), Err(Error::Config(_))));
}

fn search_config(n: usize, m: usize, nb_output: usize, alpha: f64) -> DecodeConfig {
    DecodeConfig {
        n,
        m: m.max(nb_output),
        nb_output,
        alpha,
        max_len: 7,
        ..DecodeConfig::default()
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn returned_scores_are_consistent(
        seed in any::<u64>(),
        vocab in 6usize..14,
        n in 1usize..5,
        nb_output in 1usize..4,
        alpha in prop::sample::select(vec![0.0, 0.6, 1.0]),
    ) {
        let scorer = random_ngram(seed, vocab);
        let config = search_config(n.max(nb_output), 3 * nb_output, nb_output, alpha);
        let (found, _) = b2sd(&scorer, &LABEL, &config).unwrap();
        let (greedy, _) = greedy_bsd(&scorer, &LABEL, &config).unwrap();
        for h in found.iter().chain(&greedy) {
            prop_assert!(h.log_joint <= 0.0);
            let expected = h.log_joint / length_penalty(h.tokens.len(), alpha);
            prop_assert!((h.heuristic - expected).abs() < 1e-9);
            let (penalised, plain) = rescore(&scorer, &h.tokens, config.repeat_window);
            prop_assert!((h.log_joint - penalised).abs() < 1e-9);
            if has_repeat(&h.tokens, config.repeat_window) {
                prop_assert!(h.log_joint < plain);
            } else {
                prop_assert_eq!(h.log_joint, penalised);
            }
            prop_assert!(h.complete);
        }
    }

    #[test]
    fn larger_frontier_never_hurts(seed in any::<u64>(), vocab in 6usize..14, m in 1usize..6, extra in 1usize..20) {
        let scorer = random_ngram(seed, vocab);
        let small = search_config(4, m, 1, 0.6);
        let large = search_config(4, m + extra, 1, 0.6);
        let (a, _) = b2sd(&scorer, &LABEL, &small).unwrap();
        let (b, _) = b2sd(&scorer, &LABEL, &large).unwrap();
        prop_assert!(b[0].heuristic >= a[0].heuristic, "m={} gave {} but m={} gave {}", m, a[0].heuristic, m + extra, b[0].heuristic);
    }

    #[test]
    fn dominance_leaves_nothing_better_open(
        seed in any::<u64>(),
        vocab in 6usize..14,
        nb_output in 1usize..5,
        upper in any::<bool>(),
    ) {
        let scorer = random_ngram(seed, vocab);
        let mut config = search_config(4, 3 * nb_output, nb_output, 0.6);
        if upper {
            config.stop_rule = StopRule::UpperBound;
        }
        let (found, stats) = b2sd(&scorer, &LABEL, &config).unwrap();
        if stats.termination == Termination::Dominance {
            let worst = found.last().unwrap().heuristic;
            prop_assert!(stats.best_open.unwrap() <= worst);
        }
    }

    #[test]
    fn searches_are_deterministic(seed in any::<u64>(), vocab in 6usize..14) {
        let scorer = random_ngram(seed, vocab);
        let config = search_config(3, 6, 2, 0.6);
        for search in [b2sd::<labelgen::scorer::NgramScorer>, greedy_bsd] {
            let (a, sa) = search(&scorer, &LABEL, &config).unwrap();
            let (b, sb) = search(&scorer, &LABEL, &config).unwrap();
            prop_assert_eq!(a, b);
            prop_assert_eq!(sa.vertices_explored, sb.vertices_explored);
            prop_assert_eq!(sa.dead_ends, sb.dead_ends);
            prop_assert_eq!(sa.backtracks, sb.backtracks);
        }
    }
}
