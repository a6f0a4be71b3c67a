use std::collections::HashMap;

use super::{ngram_counts, words};
use crate::{Error, Result};

pub const BLEU_MAX_ORDER: usize = 4;

/// Corpus BLEU of `candidates` against `references[i]` for candidate `i`.
///
/// Clipped n-gram counts use the maximum count over a candidate's references.
/// An order of 2 or more with no match contributes `1 / (total + 1)` instead
/// of zero. The brevity penalty compares the total candidate length with the
/// summed length of each candidate's shortest reference.
pub fn bleu<C, R>(candidates: &[C], references: &[Vec<R>]) -> Result<f64>
where
    C: AsRef<str>,
    R: AsRef<str>,
{
    if candidates.is_empty() {
        return Err(Error::Input("BLEU needs at least one candidate".into()));
    }
    if candidates.len() != references.len() {
        return Err(Error::Input(format!(
            "{} candidates but {} reference lists",
            candidates.len(),
            references.len()
        )));
    }
    let mut matched = [0usize; BLEU_MAX_ORDER];
    let mut total = [0usize; BLEU_MAX_ORDER];
    let mut cand_len = 0;
    let mut ref_len = 0;
    for (i, (candidate, refs)) in candidates.iter().zip(references).enumerate() {
        if refs.is_empty() {
            return Err(Error::Input(format!("candidate {i} has no references")));
        }
        let cand = words(candidate.as_ref());
        let refs: Vec<Vec<&str>> = refs.iter().map(|r| words(r.as_ref())).collect();
        cand_len += cand.len();
        ref_len += refs.iter().map(Vec::len).min().unwrap_or(0);
        for n in 1..=BLEU_MAX_ORDER {
            let counts = ngram_counts(&cand, n);
            let mut max_ref: HashMap<&[&str], usize> = HashMap::new();
            for r in &refs {
                for (gram, c) in ngram_counts(r, n) {
                    let slot = max_ref.entry(gram).or_default();
                    *slot = (*slot).max(c);
                }
            }
            total[n - 1] += cand.len().saturating_sub(n - 1);
            matched[n - 1] += counts
                .iter()
                .map(|(gram, &c)| c.min(max_ref.get(gram).copied().unwrap_or(0)))
                .sum::<usize>();
        }
    }
    if cand_len == 0 || matched[0] == 0 {
        return Ok(0.0);
    }
    let log_precision: f64 = (0..BLEU_MAX_ORDER)
        .map(|i| {
            let (m, t) = if matched[i] == 0 {
                (1, total[i] + 1)
            } else {
                (matched[i], total[i])
            };
            (m as f64 / t as f64).ln()
        })
        .sum::<f64>()
        / BLEU_MAX_ORDER as f64;
    let brevity = if cand_len > ref_len {
        1.0
    } else {
        (1.0 - ref_len as f64 / cand_len as f64).exp()
    };
    Ok(100.0 * brevity * log_precision.exp())
}
