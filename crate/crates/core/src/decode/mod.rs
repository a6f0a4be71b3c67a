//! Decoding: fixed-width beam search, best-first backtracking beam search and
//! an exhaustive oracle.
//!
//! Every hypothesis is scored by its length-normalised log joint probability
//!
//! ```text
//! h(Y)  = ln p(Y) / lp(|Y|)
//! lp(L) = (5 + L)^alpha / 6^alpha
//! ```
//!
//! where `|Y|` counts generated tokens including EOS (BOS is implicit). When a
//! new token repeats one of the previous `repeat_window - 1` tokens, the
//! child's probability is raised to `2 - 0.5 * p_T`, with `p_T` the scorer's
//! probability of that token. In log space this scales `ln p(Y)` by the same
//! factor.
//!
//! All three searches rank hypotheses the same way: higher heuristic first,
//! then shorter, then lexicographically smaller token ids.

mod b2sd;
mod exhaustive;
pub mod fixture;
mod greedy;
mod output;

use std::cmp::Ordering;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::scorer::Scorer;
use crate::{Error, Result, TokenId};

pub use b2sd::b2sd;
pub use exhaustive::{exhaustive_topk, EXHAUSTIVE_LIMIT};
pub use greedy::greedy_bsd;
pub use output::{write_generations, write_stats, GenerationRecord, StatsRecord};

/// `((5 + length)^alpha) / (6^alpha)`.
pub fn length_penalty(length: usize, alpha: f64) -> f64 {
    ((5.0 + length as f64) / 6.0).powf(alpha)
}

pub fn heuristic(log_joint: f64, length: usize, alpha: f64) -> f64 {
    log_joint / length_penalty(length, alpha)
}

/// Raises `p(Y)` to `2 - 0.5 * p_t`, in log space.
pub fn apply_repeat_penalty(log_joint: f64, p_t: f64) -> f64 {
    (2.0 - 0.5 * p_t) * log_joint
}

/// When best-first search may stop once `nb_output` hypotheses are complete.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopRule {
    /// Stop when the `nb_output`-th best complete heuristic is at least the
    /// best frontier heuristic.
    #[default]
    BestFrontier,
    /// Stop only when no frontier hypothesis could still be completed into
    /// one ranking above the `nb_output`-th best. A frontier entry's bound is
    /// its log joint divided by the largest length penalty reachable before
    /// `max_len`, which stays valid when `alpha > 0` makes the heuristic grow
    /// with length.
    UpperBound,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DecodeConfig {
    /// Beam size: children kept per expansion.
    pub n: usize,
    /// Frontier capacity.
    pub m: usize,
    /// Maximal probability difference in a beam. Tokens below
    /// `p_top * (1 - p_b)` are dropped; `None` disables pruning.
    pub p_b: Option<f64>,
    pub alpha: f64,
    pub max_len: usize,
    pub nb_output: usize,
    pub repeat_window: usize,
    /// Maximum scorer calls; defaults to `64 * max_len * nb_output`.
    pub step_budget: Option<usize>,
    pub stop_rule: StopRule,
}

impl Default for DecodeConfig {
    fn default() -> Self {
        DecodeConfig::with_outputs(1)
    }
}

impl DecodeConfig {
    /// The published defaults: `n = 4`, `m = 3 * nb_output`, `p_b = 1`,
    /// `alpha = 0.6`.
    pub fn with_outputs(nb_output: usize) -> Self {
        DecodeConfig {
            n: 4,
            m: 3 * nb_output,
            p_b: Some(1.0),
            alpha: 0.6,
            max_len: 64,
            nb_output,
            repeat_window: 4,
            step_budget: None,
            stop_rule: StopRule::BestFrontier,
        }
    }

    pub fn budget(&self) -> usize {
        self.step_budget
            .unwrap_or(64 * self.max_len * self.nb_output)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::Config("n must be at least 1".into()));
        }
        if self.nb_output == 0 {
            return Err(Error::Config("nb_output must be at least 1".into()));
        }
        if self.m < self.nb_output {
            return Err(Error::Config(format!(
                "m ({}) must be at least nb_output ({})",
                self.m, self.nb_output
            )));
        }
        if self.max_len == 0 {
            return Err(Error::Config("max_len must be at least 1".into()));
        }
        if let Some(p_b) = self.p_b {
            if !(0.0..=1.0).contains(&p_b) {
                return Err(Error::Config(format!("p_b {p_b} outside [0, 1]")));
            }
        }
        if !self.alpha.is_finite() {
            return Err(Error::Config("alpha must be finite".into()));
        }
        Ok(())
    }
}

/// A partial or complete output sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct Hypothesis {
    /// Generated tokens, excluding BOS and including EOS when complete.
    pub tokens: Vec<TokenId>,
    /// Natural log of the joint probability after repeat penalties.
    pub log_joint: f64,
    pub heuristic: f64,
    pub complete: bool,
}

impl Hypothesis {
    pub(crate) fn root() -> Self {
        Hypothesis {
            tokens: Vec::new(),
            log_joint: 0.0,
            heuristic: 0.0,
            complete: false,
        }
    }

    pub fn joint_probability(&self) -> f64 {
        self.log_joint.exp()
    }

    /// Tokens without a trailing EOS.
    pub fn body(&self, eos: TokenId) -> &[TokenId] {
        match self.tokens.split_last() {
            Some((last, rest)) if *last == eos => rest,
            _ => &self.tokens,
        }
    }
}

/// The shared ranking: higher heuristic, then shorter, then lexicographic.
pub fn rank(a: &Hypothesis, b: &Hypothesis) -> Ordering {
    b.heuristic
        .total_cmp(&a.heuristic)
        .then(a.tokens.len().cmp(&b.tokens.len()))
        .then_with(|| a.tokens.cmp(&b.tokens))
}

/// Hypothesis ordered by [`rank`], for ordered sets.
#[derive(Debug, Clone)]
pub(crate) struct Ranked(pub Hypothesis);

impl PartialEq for Ranked {
    fn eq(&self, other: &Self) -> bool {
        rank(&self.0, &other.0) == Ordering::Equal
    }
}

impl Eq for Ranked {}

impl PartialOrd for Ranked {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Ranked {
    fn cmp(&self, other: &Self) -> Ordering {
        rank(&self.0, &other.0)
    }
}

/// Why a search stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    /// Enough complete hypotheses outrank everything left open.
    Dominance,
    /// Nothing left to expand.
    Exhausted,
    /// The step budget ran out.
    Budget,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchStats {
    /// Scorer calls on non-empty prefixes; the initial BOS-only call is not a
    /// vertex of the search tree.
    pub vertices_explored: usize,
    /// Explored vertices that are not a prefix of any returned hypothesis.
    pub dead_ends: usize,
    /// Expansions of a hypothesis that is not a child of the one expanded
    /// just before.
    pub backtracks: usize,
    pub wall_time: Duration,
    pub termination: Termination,
    /// Best heuristic still on the frontier at return, if any.
    pub best_open: Option<f64>,
}

/// Bookkeeping shared by the searches.
pub(crate) struct Tracker {
    explored: Vec<Vec<TokenId>>,
    previous: Option<Vec<TokenId>>,
    backtracks: usize,
    pub calls: usize,
}

impl Tracker {
    pub fn new() -> Self {
        Tracker {
            explored: Vec::new(),
            previous: None,
            backtracks: 0,
            calls: 0,
        }
    }

    /// Records an expansion of `tokens`.
    pub fn visit(&mut self, tokens: &[TokenId]) {
        self.calls += 1;
        if let Some(prev) = &self.previous {
            let is_child = tokens.len() == prev.len() + 1 && tokens.starts_with(prev);
            if !is_child {
                self.backtracks += 1;
            }
        }
        self.previous = Some(tokens.to_vec());
        if !tokens.is_empty() {
            self.explored.push(tokens.to_vec());
        }
    }

    pub fn finish(
        self,
        returned: &[Hypothesis],
        wall_time: Duration,
        termination: Termination,
        best_open: Option<f64>,
    ) -> SearchStats {
        let dead_ends = self
            .explored
            .iter()
            .filter(|v| !returned.iter().any(|h| h.tokens.starts_with(v)))
            .count();
        SearchStats {
            vertices_explored: self.explored.len(),
            dead_ends,
            backtracks: self.backtracks,
            wall_time,
            termination,
            best_open,
        }
    }
}

/// Appends `token` (scored `p`) to `parent`, applying the repeat penalty.
pub(crate) fn extend(
    parent: &Hypothesis,
    token: TokenId,
    p: f64,
    eos: TokenId,
    config: &DecodeConfig,
) -> Hypothesis {
    let mut tokens = Vec::with_capacity(parent.tokens.len() + 1);
    tokens.extend_from_slice(&parent.tokens);
    tokens.push(token);
    let mut log_joint = parent.log_joint + p.ln();
    let lookback = config.repeat_window.saturating_sub(1);
    let recent = &parent.tokens[parent.tokens.len().saturating_sub(lookback)..];
    if recent.contains(&token) {
        log_joint = apply_repeat_penalty(log_joint, p);
    }
    let complete = token == eos || tokens.len() >= config.max_len;
    let heuristic = heuristic(log_joint, tokens.len(), config.alpha);
    Hypothesis {
        tokens,
        log_joint,
        heuristic,
        complete,
    }
}

/// Tokens kept from one distribution: zero-probability tokens masked, `p_b`
/// pruning, then the top `n` by probability (ties to the smaller id).
pub(crate) fn beam_candidates(probs: &[f64], config: &DecodeConfig) -> Vec<(TokenId, f64)> {
    let mut candidates: Vec<(TokenId, f64)> = probs
        .iter()
        .enumerate()
        .filter(|(_, p)| **p > 0.0)
        .map(|(i, &p)| (TokenId(i as u32), p))
        .collect();
    candidates.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    if let (Some(p_b), Some(&(_, top))) = (config.p_b, candidates.first()) {
        let threshold = top * (1.0 - p_b);
        candidates.retain(|&(_, p)| p >= threshold);
    }
    candidates.truncate(config.n);
    candidates
}

/// Queries the scorer for `parent` and builds its children.
pub(crate) fn expand<S: Scorer + ?Sized>(
    scorer: &S,
    label: &[TokenId],
    parent: &Hypothesis,
    config: &DecodeConfig,
) -> Result<Vec<Hypothesis>> {
    let dist = scorer.next_distribution(label, &parent.tokens)?;
    let eos = scorer.eos();
    Ok(beam_candidates(dist.probs(), config)
        .into_iter()
        .map(|(token, p)| extend(parent, token, p, eos, config))
        .collect())
}
