//! Lexical similarity to references and intra-label diversity.
//!
//! All metrics split text on whitespace and are case-sensitive. BLEU and
//! ROUGE are reported on a 0 to 100 scale, Jaccard on 0 to 1.

mod bleu;
mod diversity;
mod report;
mod rouge;

use std::collections::HashMap;

pub use bleu::{bleu, BLEU_MAX_ORDER};
pub use diversity::{jaccard, jaccard_diversity, DiversityReport};
pub use report::{evaluate, write_csv, EvalReport, LabelScores};
pub(crate) use report::csv_field;
pub use rouge::{rouge_l, rouge_n};

pub(crate) fn words(text: &str) -> Vec<&str> {
    text.split_whitespace().collect()
}

pub(crate) fn ngram_counts<'t>(tokens: &'t [&'t str], n: usize) -> HashMap<&'t [&'t str], usize> {
    let mut counts = HashMap::new();
    if n == 0 || tokens.len() < n {
        return counts;
    }
    for gram in tokens.windows(n) {
        *counts.entry(gram).or_default() += 1;
    }
    counts
}
