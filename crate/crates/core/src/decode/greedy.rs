use std::time::Instant;

use super::{expand, rank, DecodeConfig, Hypothesis, SearchStats, Termination, Tracker};
use crate::scorer::Scorer;
use crate::{Error, Result, TokenId};

/// Classic beam search: every step expands all live hypotheses and keeps the
/// best `n` children overall. Complete children leave the beam, which then
/// shrinks accordingly.
pub fn greedy_bsd<S: Scorer + ?Sized>(
    scorer: &S,
    label: &[TokenId],
    config: &DecodeConfig,
) -> Result<(Vec<Hypothesis>, SearchStats)> {
    config.validate()?;
    if config.nb_output > config.n {
        return Err(Error::Config(format!(
            "greedy beam search cannot return nb_output = {} sequences with n = {}",
            config.nb_output, config.n
        )));
    }
    let start = Instant::now();
    let budget = config.budget();
    let mut tracker = Tracker::new();
    let mut live = vec![Hypothesis::root()];
    let mut pool: Vec<Hypothesis> = Vec::new();
    let mut termination = Termination::Exhausted;

    while !live.is_empty() {
        let mut candidates = Vec::new();
        for hyp in &live {
            if tracker.calls >= budget {
                termination = Termination::Budget;
                break;
            }
            tracker.visit(&hyp.tokens);
            candidates.extend(expand(scorer, label, hyp, config)?);
        }
        if termination == Termination::Budget {
            break;
        }
        candidates.sort_by(rank);
        candidates.truncate(config.n);
        live.clear();
        for child in candidates {
            if child.complete {
                pool.push(child);
            } else {
                live.push(child);
            }
        }
    }

    pool.sort_by(rank);
    pool.truncate(config.nb_output);
    let best_open = live.first().map(|h| h.heuristic);
    let stats = tracker.finish(&pool, start.elapsed(), termination, best_open);
    if pool.is_empty() {
        return Err(Error::SearchExhausted { stats });
    }
    Ok((pool, stats))
}
