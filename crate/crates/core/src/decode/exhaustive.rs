use std::collections::BTreeSet;

use super::{extend, DecodeConfig, Hypothesis, Ranked};
use crate::scorer::Scorer;
use crate::{Error, Result, TokenId};

/// Largest `|V|^max_len` the oracle accepts.
pub const EXHAUSTIVE_LIMIT: f64 = 1e7;

/// Enumerates every sequence ending in EOS or cut at `max_len` and returns the
/// `k` best under the shared ranking. Scoring, repeat penalties and zero
/// masking match the beam searches; no beam or `p_b` pruning applies.
pub fn exhaustive_topk<S: Scorer + ?Sized>(
    scorer: &S,
    label: &[TokenId],
    max_len: usize,
    k: usize,
    alpha: f64,
    repeat_window: usize,
) -> Result<Vec<Hypothesis>> {
    let space = (scorer.vocab_size() as f64).powi(max_len as i32);
    if space > EXHAUSTIVE_LIMIT {
        return Err(Error::Capacity(format!(
            "{} tokens over {max_len} steps is {space:e} sequences, above {EXHAUSTIVE_LIMIT:e}",
            scorer.vocab_size()
        )));
    }
    let config = DecodeConfig {
        max_len,
        alpha,
        repeat_window,
        p_b: None,
        ..DecodeConfig::default()
    };
    let mut best = BTreeSet::new();
    let mut stack = vec![Hypothesis::root()];
    let eos = scorer.eos();
    while let Some(hyp) = stack.pop() {
        let dist = scorer.next_distribution(label, &hyp.tokens)?;
        for (i, &p) in dist.probs().iter().enumerate() {
            if p <= 0.0 {
                continue;
            }
            let child = extend(&hyp, TokenId(i as u32), p, eos, &config);
            if child.complete {
                best.insert(Ranked(child));
                if best.len() > k {
                    best.pop_last();
                }
            } else {
                stack.push(child);
            }
        }
    }
    Ok(best.into_iter().map(|r| r.0).collect())
}
