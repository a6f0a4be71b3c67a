//! A hand-built conditional table on which greedy beam search and best-first
//! search part ways.
//!
//! With `n = 2` two sentences tie for the top: "I am twelve" (joint
//! probability 0.138) and "You are twelve" (0.135). Greedy beam search keeps
//! "I have scored" over "You are twelve" at the third step and returns it,
//! after exploring six vertices. Best-first search backtracks to "You are",
//! explores a seventh vertex that turns out to be a dead end ("You are twelve
//! scored"), and returns both sentences.
//!
//! ```
//! use labelgen::decode::{b2sd, fixture, greedy_bsd};
//!
//! let (vocab, scorer) = fixture::worked_example();
//! let config = fixture::config();
//! let (found, stats) = b2sd(&scorer, &[], &config).unwrap();
//! let text: Vec<String> = found.iter().map(|h| vocab.decode(&h.tokens).unwrap()).collect();
//! assert_eq!(text, ["I am twelve", "You are twelve"]);
//! assert_eq!(stats.vertices_explored, 7);
//!
//! let (_, greedy_stats) = greedy_bsd(&scorer, &[], &config).unwrap();
//! assert_eq!(greedy_stats.vertices_explored, 6);
//! ```

use super::DecodeConfig;
use crate::scorer::TableScorer;
use crate::tokenizer::{TokenId, Vocabulary, SPECIALS};

pub const WORDS: [&str; 8] = ["I", "You", "He", "am", "are", "have", "twelve", "scored"];

/// Rows of the table: prefix words and their next-word probabilities. Joint
/// probabilities are products along the path, so each row is written as
/// ratios of the joint probabilities of the children.
const TABLE: &[(&str, &[(&str, f64)])] = &[
    ("", &[("I", 0.6), ("You", 0.38), ("He", 0.02)]),
    ("I", &[("am", 0.31 / 0.6), ("have", 0.29 / 0.6)]),
    ("You", &[("are", 0.28 / 0.38), ("have", 0.1 / 0.38)]),
    ("He", &[("have", 1.0)]),
    ("He have", &[("scored", 1.0)]),
    ("He have scored", &[("EOS", 1.0)]),
    (
        "I am",
        &[
            ("twelve", 0.27 / 0.31),
            ("scored", 0.02 / 0.31),
            ("have", 0.02 / 0.31),
        ],
    ),
    (
        "I have",
        &[
            ("scored", 0.2 / 0.29),
            ("twelve", 0.08 / 0.29),
            ("am", 0.01 / 0.29),
        ],
    ),
    ("You are", &[("twelve", 0.275 / 0.28), ("scored", 0.005 / 0.28)]),
    ("You have", &[("scored", 1.0)]),
    ("You have scored", &[("EOS", 1.0)]),
    ("I am twelve", &[("EOS", 0.138 / 0.27), ("scored", 0.132 / 0.27)]),
    ("You are twelve", &[("EOS", 0.135 / 0.275), ("scored", 0.14 / 0.275)]),
    ("I have scored", &[("EOS", 0.1335 / 0.2), ("twelve", 0.0665 / 0.2)]),
    ("I am scored", &[("EOS", 1.0)]),
    ("I am have", &[("EOS", 1.0)]),
    ("I have twelve", &[("EOS", 1.0)]),
    ("I have am", &[("EOS", 1.0)]),
    ("You are scored", &[("EOS", 1.0)]),
    ("I am twelve scored", &[("EOS", 0.5), ("twelve", 0.5)]),
    ("You are twelve scored", &[("EOS", 0.5), ("twelve", 0.5)]),
    ("I am twelve scored twelve", &[("EOS", 1.0)]),
    ("You are twelve scored twelve", &[("EOS", 1.0)]),
    ("I have scored twelve", &[("EOS", 1.0)]),
];

/// The vocabulary and table scorer of the example.
pub fn worked_example() -> (Vocabulary, TableScorer) {
    let pieces = SPECIALS
        .iter()
        .chain(WORDS.iter())
        .map(|s| s.to_string())
        .collect();
    let vocab = Vocabulary::from_pieces(pieces).expect("fixture vocabulary is valid");
    let id = |word: &str| -> TokenId {
        if word == "EOS" {
            TokenId::EOS
        } else {
            vocab.id(word).expect("fixture word in vocabulary")
        }
    };
    let mut scorer = TableScorer::new(vocab.len());
    for (prefix, row) in TABLE {
        let prefix = prefix.split_whitespace().map(id).collect();
        let entries: Vec<(TokenId, f64)> = row.iter().map(|&(w, p)| (id(w), p)).collect();
        scorer
            .insert(prefix, &entries)
            .expect("fixture rows are distributions");
    }
    (vocab, scorer)
}

/// `n = 2`, `m = 2`, `p_b = 1`, two outputs.
pub fn config() -> DecodeConfig {
    DecodeConfig {
        n: 2,
        m: 2,
        p_b: Some(1.0),
        nb_output: 2,
        max_len: 8,
        ..DecodeConfig::default()
    }
}
