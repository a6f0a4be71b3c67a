use std::path::PathBuf;
use std::time::Instant;

use anyhow::{bail, Context as _, Result};
use clap::Args;
use labelgen::corpus::{label_counts, load_records, Format};
use labelgen::scorer::{Scorer, ScorerHandle};
use labelgen::Vocabulary;
use serde::Serialize;

use super::{decode_label, Algo, DecodeArgs};
use crate::output::write_bytes;
use crate::{require_file, Context};

#[derive(Debug, Clone, Default, Args)]
pub struct BenchArgs {
    /// Comma-separated scorer files (default: <out>/scorer.bin).
    #[arg(long, value_delimiter = ',')]
    pub checkpoints: Option<Vec<PathBuf>>,
    /// Vocabulary file (default: <out>/vocab.txt).
    #[arg(long)]
    pub vocab: Option<PathBuf>,
    /// Records whose labels are decoded (default: <out>/valid.jsonl).
    #[arg(long)]
    pub labels: Option<PathBuf>,
    /// Comma-separated output multipliers.
    #[arg(long, value_delimiter = ',')]
    pub multipliers: Option<Vec<usize>>,
    #[command(flatten)]
    pub decode: DecodeArgs,
}

pub const DEFAULT_MULTIPLIERS: [usize; 4] = [2, 5, 7, 10];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchRow {
    pub algorithm: &'static str,
    pub multiplier: usize,
    pub checkpoint: String,
    pub total_wall_time_ms: f64,
    pub mean_vertices: f64,
    pub mean_dead_ends: f64,
}

/// Decodes every validation label with both algorithms at each multiplier
/// and writes `bench.csv`. Searches run one at a time so timings are not
/// shared between threads. The fixed-width beam is widened to the number of
/// requested outputs when that exceeds `n`.
pub fn bench(ctx: &Context, args: BenchArgs) -> Result<()> {
    let cfg = &ctx.config.bench;
    let section = args.decode.section().or(&ctx.config.decode);
    let checkpoints = args
        .checkpoints
        .or_else(|| cfg.checkpoints.clone())
        .unwrap_or_else(|| vec![ctx.path("scorer.bin")]);
    if checkpoints.is_empty() {
        bail!("no checkpoints given");
    }
    let multipliers = args
        .multipliers
        .or_else(|| cfg.multipliers.clone())
        .unwrap_or_else(|| DEFAULT_MULTIPLIERS.to_vec());
    if multipliers.is_empty() || multipliers.contains(&0) {
        bail!("multipliers must be a non-empty list of positive integers");
    }
    let vocab_path = args.vocab.unwrap_or_else(|| ctx.path("vocab.txt"));
    let labels_path = args.labels.unwrap_or_else(|| ctx.path("valid.jsonl"));
    require_file(&vocab_path, "vocabulary file")?;
    require_file(&labels_path, "label file")?;
    for path in &checkpoints {
        require_file(path, "checkpoint")?;
    }
    let vocab = Vocabulary::load(&vocab_path)?;
    let labels = label_counts(&load_records(&labels_path, Format::from_path(&labels_path))?);
    if labels.is_empty() {
        bail!("{} holds no labels", labels_path.display());
    }
    let nb_output = section.nb_output.unwrap_or(1);

    let mut rows = Vec::new();
    for path in &checkpoints {
        let scorer = ScorerHandle::load(path)
            .with_context(|| format!("cannot load checkpoint {}", path.display()))?;
        if scorer.vocab_size() != vocab.len() {
            bail!(
                "checkpoint {} expects {} tokens but the vocabulary has {}",
                path.display(),
                scorer.vocab_size(),
                vocab.len()
            );
        }
        for algo in [Algo::Greedy, Algo::B2sd] {
            for &multiplier in &multipliers {
                let mut wall = 0.0;
                let mut vertices = 0;
                let mut dead_ends = 0;
                for (label, count) in &labels {
                    let outputs = count * multiplier * nb_output;
                    let mut config = section.config_for(outputs);
                    if algo == Algo::Greedy {
                        config.n = config.n.max(outputs);
                    }
                    let tokens = vocab.encode(label);
                    let start = Instant::now();
                    let decoded = decode_label(algo, &scorer, &tokens, &config)?;
                    wall += start.elapsed().as_secs_f64() * 1e3;
                    vertices += decoded.stats.vertices_explored;
                    dead_ends += decoded.stats.dead_ends;
                }
                let n = labels.len() as f64;
                rows.push(BenchRow {
                    algorithm: algo.name(),
                    multiplier,
                    checkpoint: path.display().to_string(),
                    total_wall_time_ms: wall,
                    mean_vertices: vertices as f64 / n,
                    mean_dead_ends: dead_ends as f64 / n,
                });
            }
        }
    }

    let mut csv = String::from(
        "algorithm,multiplier,checkpoint,total_wall_time_ms,mean_vertices,mean_dead_ends\n",
    );
    for r in &rows {
        csv.push_str(&format!(
            "{},{},{},{:.3},{:.3},{:.3}\n",
            r.algorithm,
            r.multiplier,
            csv_field(&r.checkpoint),
            r.total_wall_time_ms,
            r.mean_vertices,
            r.mean_dead_ends
        ));
    }
    write_bytes(&ctx.path("bench.csv"), csv.as_bytes())?;
    print!("{csv}");
    Ok(())
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}
