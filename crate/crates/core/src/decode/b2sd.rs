use std::collections::BTreeSet;
use std::time::Instant;

use super::{
    expand, length_penalty, rank, DecodeConfig, Hypothesis, Ranked, SearchStats, StopRule,
    Termination, Tracker,
};
use crate::scorer::Scorer;
use crate::{Error, Result, TokenId};

/// Best-first beam search with backtracking.
///
/// The frontier holds partial hypotheses ordered by [`rank`](super::rank) and
/// capped at `m`. Each step removes the best one, queries the scorer once and
/// inserts its top-`n` children; complete children go to a pool instead.
/// Search stops when the pool's `nb_output`-th best dominates the frontier
/// (see [`StopRule`]), the frontier empties, or the step budget runs out.
pub fn b2sd<S: Scorer + ?Sized>(
    scorer: &S,
    label: &[TokenId],
    config: &DecodeConfig,
) -> Result<(Vec<Hypothesis>, SearchStats)> {
    config.validate()?;
    let start = Instant::now();
    let budget = config.budget();
    let mut tracker = Tracker::new();
    let mut frontier = BTreeSet::from([Ranked(Hypothesis::root())]);
    let mut pool: Vec<Hypothesis> = Vec::new();

    let termination = loop {
        if pool.len() >= config.nb_output {
            pool.sort_by(rank);
            let kth = &pool[config.nb_output - 1];
            if dominates(kth, &frontier, config) {
                break if frontier.is_empty() {
                    Termination::Exhausted
                } else {
                    Termination::Dominance
                };
            }
        }
        if frontier.is_empty() {
            break Termination::Exhausted;
        }
        if tracker.calls >= budget {
            break Termination::Budget;
        }
        let Ranked(best) = frontier.pop_first().expect("frontier is non-empty");
        tracker.visit(&best.tokens);
        for child in expand(scorer, label, &best, config)? {
            if child.complete {
                pool.push(child);
            } else {
                frontier.insert(Ranked(child));
            }
        }
        while frontier.len() > config.m {
            frontier.pop_last();
        }
    };

    pool.sort_by(rank);
    pool.truncate(config.nb_output);
    let best_open = frontier.first().map(|r| r.0.heuristic);
    let stats = tracker.finish(&pool, start.elapsed(), termination, best_open);
    if pool.is_empty() {
        return Err(Error::SearchExhausted { stats });
    }
    Ok((pool, stats))
}

fn dominates(kth: &Hypothesis, frontier: &BTreeSet<Ranked>, config: &DecodeConfig) -> bool {
    match config.stop_rule {
        StopRule::BestFrontier => frontier
            .first()
            .is_none_or(|best| kth.heuristic >= best.0.heuristic),
        StopRule::UpperBound => frontier
            .iter()
            .all(|open| kth.heuristic > completion_bound(&open.0, config)),
    }
}

/// Largest heuristic any completion of `open` can reach. Extending never
/// raises the log joint, so the bound is the current log joint over the
/// largest reachable length penalty, which sits at one end of the range.
fn completion_bound(open: &Hypothesis, config: &DecodeConfig) -> f64 {
    let shortest = open.tokens.len() + 1;
    let longest = config.max_len.max(shortest);
    let lp = length_penalty(shortest, config.alpha).max(length_penalty(longest, config.alpha));
    open.log_joint / lp
}
