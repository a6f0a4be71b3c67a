mod bench;
mod corpus;
mod evaluate;
mod generate;
mod train;

use std::collections::BTreeMap;

use anyhow::{bail, Result};
use clap::{Args, ValueEnum};
use labelgen::decode::{b2sd, greedy_bsd, DecodeConfig, Hypothesis, SearchStats, StopRule};
use labelgen::scorer::Scorer;
use labelgen::{Error, TokenId};

use crate::config::DecodeSection;

pub use bench::{bench, BenchArgs, BenchRow};
pub use corpus::{corpus, CorpusArgs};
pub use evaluate::{evaluate, EvaluateArgs};
pub use generate::{generate, GenerateArgs};
pub use train::{train, TrainArgs, TrainSummary};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Algo {
    B2sd,
    Greedy,
}

impl Algo {
    pub fn name(self) -> &'static str {
        match self {
            Algo::B2sd => "b2sd",
            Algo::Greedy => "greedy",
        }
    }

    fn parse(s: &str) -> Result<Algo> {
        match s {
            "b2sd" => Ok(Algo::B2sd),
            "greedy" => Ok(Algo::Greedy),
            other => bail!("unknown algorithm {other:?}; expected b2sd or greedy"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum StopRuleArg {
    BestFrontier,
    UpperBound,
}

impl From<StopRuleArg> for StopRule {
    fn from(r: StopRuleArg) -> Self {
        match r {
            StopRuleArg::BestFrontier => StopRule::BestFrontier,
            StopRuleArg::UpperBound => StopRule::UpperBound,
        }
    }
}

/// Decoder flags shared by `generate` and `bench`.
#[derive(Debug, Clone, Default, Args)]
pub struct DecodeArgs {
    /// Beam size.
    #[arg(long)]
    pub n: Option<usize>,
    /// Frontier capacity (default three times the outputs per label).
    #[arg(long)]
    pub m: Option<usize>,
    /// Maximal probability gap inside a beam, in [0, 1].
    #[arg(long)]
    pub p_b: Option<f64>,
    /// Length-normalisation exponent.
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub max_len: Option<usize>,
    /// Sequences requested per label occurrence.
    #[arg(long)]
    pub nb_output: Option<usize>,
    #[arg(long)]
    pub repeat_window: Option<usize>,
    /// Maximum scorer calls per label.
    #[arg(long)]
    pub step_budget: Option<usize>,
    #[arg(long, value_enum)]
    pub stop_rule: Option<StopRuleArg>,
}

impl DecodeArgs {
    fn section(&self) -> DecodeSection {
        DecodeSection {
            n: self.n,
            m: self.m,
            p_b: self.p_b,
            alpha: self.alpha,
            max_len: self.max_len,
            nb_output: self.nb_output,
            repeat_window: self.repeat_window,
            step_budget: self.step_budget,
            stop_rule: self.stop_rule.map(Into::into),
            ..Default::default()
        }
    }
}

pub(crate) struct Decoded {
    pub hypotheses: Vec<Hypothesis>,
    pub stats: SearchStats,
}

/// Runs one search. A search that exhausts its budget empty-handed is
/// reported with its statistics rather than failing the whole run.
pub(crate) fn decode_label<S: Scorer + ?Sized>(
    algo: Algo,
    scorer: &S,
    label: &[TokenId],
    config: &DecodeConfig,
) -> Result<Decoded> {
    let result = match algo {
        Algo::B2sd => b2sd(scorer, label, config),
        Algo::Greedy => greedy_bsd(scorer, label, config),
    };
    match result {
        Ok((hypotheses, stats)) => Ok(Decoded { hypotheses, stats }),
        Err(Error::SearchExhausted { stats }) => Ok(Decoded {
            hypotheses: Vec::new(),
            stats,
        }),
        Err(e) => Err(e.into()),
    }
}

/// Texts grouped by label, in label order.
fn group_by_label<'a>(pairs: impl IntoIterator<Item = (&'a str, &'a str)>) -> BTreeMap<String, Vec<&'a str>> {
    let mut groups: BTreeMap<String, Vec<&str>> = BTreeMap::new();
    for (label, text) in pairs {
        groups.entry(label.to_string()).or_default().push(text);
    }
    groups
}
