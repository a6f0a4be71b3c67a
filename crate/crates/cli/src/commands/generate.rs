use std::path::PathBuf;

use anyhow::{bail, Context as _, Result};
use clap::Args;
use labelgen::corpus::{label_counts, load_records, Format};
use labelgen::decode::{write_generations, write_stats, DecodeConfig, GenerationRecord, StatsRecord};
use labelgen::scorer::{Scorer, ScorerHandle};
use labelgen::Vocabulary;

use super::{decode_label, Algo, DecodeArgs, Decoded};
use crate::output::write_atomic;
use crate::{require_file, Context};

#[derive(Debug, Clone, Default, Args)]
pub struct GenerateArgs {
    /// Scorer file (default: <out>/scorer.bin).
    #[arg(long)]
    pub scorer: Option<PathBuf>,
    /// Vocabulary file (default: <out>/vocab.txt).
    #[arg(long)]
    pub vocab: Option<PathBuf>,
    /// Records whose labels are decoded (default: <out>/test.jsonl).
    #[arg(long)]
    pub labels: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub algo: Option<Algo>,
    /// Sequences per label occurrence, multiplied by --nb-output.
    #[arg(long)]
    pub multiplier: Option<usize>,
    #[command(flatten)]
    pub decode: DecodeArgs,
    /// Worker threads (default: available parallelism).
    #[arg(long)]
    pub threads: Option<usize>,
}

pub(crate) struct Plan {
    pub label: String,
    pub tokens: Vec<labelgen::TokenId>,
    pub config: DecodeConfig,
}

/// Writes `generations.jsonl` (one line per returned sequence, ranked from 1
/// within each label) and `stats.json` (search counts summed over labels).
pub fn generate(ctx: &Context, args: GenerateArgs) -> Result<()> {
    let section = args.decode.section().or(&ctx.config.decode);
    let algo = match (args.algo, section.algo.as_deref()) {
        (Some(a), _) => a,
        (None, Some(s)) => Algo::parse(s)?,
        (None, None) => Algo::B2sd,
    };
    let multiplier = args.multiplier.or(section.multiplier).unwrap_or(1);
    if multiplier == 0 {
        bail!("--multiplier must be at least 1");
    }
    let nb_output = section.nb_output.unwrap_or(1);
    let probe = section.config_for(nb_output);
    if algo == Algo::Greedy && nb_output > probe.n {
        bail!(
            "greedy beam search returns at most n sequences: nb_output {nb_output} > n {}",
            probe.n
        );
    }
    probe.validate()?;

    let scorer_path = args.scorer.unwrap_or_else(|| ctx.path("scorer.bin"));
    let vocab_path = args.vocab.unwrap_or_else(|| ctx.path("vocab.txt"));
    let labels_path = args.labels.unwrap_or_else(|| ctx.path("test.jsonl"));
    require_file(&scorer_path, "scorer file")?;
    require_file(&vocab_path, "vocabulary file")?;
    require_file(&labels_path, "label file")?;
    let scorer = ScorerHandle::load(&scorer_path)
        .with_context(|| format!("cannot load scorer {}", scorer_path.display()))?;
    let vocab = Vocabulary::load(&vocab_path)?;
    if vocab.len() != scorer.vocab_size() {
        bail!(
            "vocabulary {} has {} pieces but the scorer expects {}",
            vocab_path.display(),
            vocab.len(),
            scorer.vocab_size()
        );
    }
    let records = load_records(&labels_path, Format::from_path(&labels_path))?;

    let mut plans = Vec::new();
    for (label, count) in label_counts(&records) {
        let outputs = count * multiplier * nb_output;
        let config = section.config_for(outputs);
        if algo == Algo::Greedy && outputs > config.n {
            bail!(
                "greedy beam search returns at most n sequences: label {label:?} needs {outputs} > n {}",
                config.n
            );
        }
        config.validate()?;
        plans.push(Plan {
            tokens: vocab.encode(&label),
            label,
            config,
        });
    }

    let threads = args
        .threads
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    let results = run_parallel(&plans, threads, |plan| {
        decode_label(algo, &scorer, &plan.tokens, &plan.config)
    })?;

    let mut lines = Vec::new();
    let mut stats = StatsRecord::default();
    let mut short = 0;
    for (plan, Decoded { hypotheses, stats: s }) in plans.iter().zip(results) {
        stats.add(&StatsRecord::from(&s));
        if hypotheses.len() < plan.config.nb_output {
            short += 1;
        }
        for (rank, h) in hypotheses.iter().enumerate() {
            lines.push(GenerationRecord {
                label: plan.label.clone(),
                text: vocab.decode(h.body(scorer.eos()))?,
                log_joint: h.log_joint,
                heuristic: h.heuristic,
                rank: rank + 1,
            });
        }
    }
    if short > 0 {
        log::warn!("{short} labels returned fewer sequences than requested");
    }
    write_atomic(&ctx.path("generations.jsonl"), |w| write_generations(w, &lines))?;
    write_atomic(&ctx.path("stats.json"), |w| write_stats(w, &stats))?;
    println!(
        "generated {} sequences for {} labels with {} into {}",
        lines.len(),
        plans.len(),
        algo.name(),
        ctx.out.display()
    );
    Ok(())
}

/// Maps `f` over `items` on up to `threads` scoped threads, keeping order.
pub(crate) fn run_parallel<T: Sync, R: Send>(
    items: &[T],
    threads: usize,
    f: impl Fn(&T) -> Result<R> + Sync,
) -> Result<Vec<R>> {
    if items.is_empty() {
        return Ok(Vec::new());
    }
    let chunk = items.len().div_ceil(threads.max(1));
    std::thread::scope(|scope| {
        let handles: Vec<_> = items
            .chunks(chunk)
            .map(|part| scope.spawn(|| part.iter().map(&f).collect::<Result<Vec<R>>>()))
            .collect();
        let mut out = Vec::with_capacity(items.len());
        for h in handles {
            out.extend(h.join().expect("decode worker panicked")?);
        }
        Ok(out)
    })
}
