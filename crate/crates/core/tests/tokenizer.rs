use std::collections::HashSet;
use std::sync::OnceLock;

use labelgen::corpus::{generate_synthetic_corpus, Entity, GAZETTEERS};
use labelgen::tokenizer::SPECIALS;
use labelgen::{TokenId, Vocabulary};
use proptest::prelude::*;

/// Synthetic records over every gazetteer drug, so the alphabet covers all
/// gazetteer entries.
fn corpus_texts() -> Vec<String> {
    let drugs = GAZETTEERS.entries(Entity::Drug).len();
    generate_synthetic_corpus(5, drugs, 4)
        .unwrap()
        .into_iter()
        .flat_map(|r| [r.record.label, r.record.instruction])
        .collect()
}

fn trained(which: usize) -> &'static Vocabulary {
    static VOCABS: OnceLock<Vec<Vocabulary>> = OnceLock::new();
    let vocabs = VOCABS.get_or_init(|| {
        let texts = corpus_texts();
        [150, 400, 900]
            .iter()
            .map(|&size| Vocabulary::train(&texts, size, 1).unwrap())
            .collect()
    });
    &vocabs[which % vocabs.len()]
}

/// Sentences assembled from gazetteer entries, which share the training
/// alphabet.
fn gazetteer_sentence() -> impl Strategy<Value = String> {
    let entries: Vec<&'static str> = Entity::ALL
        .iter()
        .flat_map(|&e| GAZETTEERS.entries(e).iter().copied())
        .collect();
    prop::collection::vec(prop::sample::select(entries), 1..8).prop_map(|parts| parts.join(" "))
}

#[test]
fn larger_budgets_extend_smaller_vocabularies() {
    let texts = corpus_texts();
    let mut previous: Option<Vocabulary> = None;
    for size in [120, 200, 400, 800] {
        let vocab = Vocabulary::train(&texts, size, 1).unwrap();
        assert_eq!(&vocab.pieces()[..4], &SPECIALS);
        if let Some(smaller) = &previous {
            let pieces: HashSet<&String> = vocab.pieces().iter().collect();
            assert!(smaller.pieces().iter().all(|p| pieces.contains(p)), "size {size}");
        }
        previous = Some(vocab);
    }
}

#[test]
fn every_training_character_is_a_piece() {
    let texts = corpus_texts();
    let vocab = Vocabulary::train(&texts, 300, 1).unwrap();
    for c in texts.iter().flat_map(|t| t.chars()).filter(|c| !c.is_whitespace()) {
        assert!(vocab.id(&c.to_string()).is_some(), "{c:?}");
        assert!(vocab.id(&format!("##{c}")).is_some(), "##{c:?}");
    }
}

proptest! {
    #[test]
    fn gazetteer_sentences_round_trip(text in gazetteer_sentence(), which in 0usize..3) {
        let vocab = trained(which);
        let ids = vocab.encode(&text);
        prop_assert!(!ids.contains(&TokenId::UNK));
        prop_assert_eq!(vocab.decode(&ids).unwrap(), text);
    }

    #[test]
    fn encoding_is_total(text in any::<String>()) {
        let vocab = Vocabulary::train(&["aaab mg PO"], 20, 1).unwrap();
        let ids = vocab.encode(&text);
        prop_assert!(ids.iter().all(|id| id.index() < vocab.len()));
        let words = text.split_whitespace().count();
        prop_assert!(ids.len() >= words);
        vocab.decode(&ids).unwrap();
    }

    #[test]
    fn whitespace_is_normalised(words in prop::collection::vec("[a-z]{1,6}", 1..6), gaps in prop::collection::vec("[ \t\n]{1,3}", 6)) {
        let vocab = Vocabulary::train(&["abcdefghijklmnopqrstuvwxyz"], 100, 1).unwrap();
        let spaced: String = words
            .iter()
            .zip(&gaps)
            .map(|(w, g)| format!("{g}{w}"))
            .collect();
        prop_assert_eq!(vocab.decode(&vocab.encode(&spaced)).unwrap(), words.join(" "));
    }
}
