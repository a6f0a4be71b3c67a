use std::path::PathBuf;

use anyhow::{bail, Context as _, Result};
use clap::{Args, ValueEnum};
use labelgen::corpus::{load_records, Format};
use labelgen::scorer::{train_ngram, train_transformer, NgramScorer, ScorerHandle, TransformerConfig};
use labelgen::Vocabulary;
use serde::Serialize;

use crate::output::{write_bytes, write_json};
use crate::{require_file, Context};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ScorerArg {
    Ngram,
    Transformer,
}

#[derive(Debug, Clone, Default, Args)]
pub struct TrainArgs {
    /// Training records (default: <out>/train.jsonl).
    #[arg(long)]
    pub train: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub scorer: Option<ScorerArg>,
    /// N-gram order.
    #[arg(long)]
    pub order: Option<usize>,
    /// Comma-separated interpolation weights, lowest order first.
    #[arg(long, value_delimiter = ',')]
    pub weights: Option<Vec<f64>>,
    /// Transformer preset: paper or desk.
    #[arg(long)]
    pub preset: Option<String>,
    /// Transformer epochs, overriding the preset.
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub vocab_size: Option<usize>,
    #[arg(long)]
    pub min_frequency: Option<usize>,
}

pub const DEFAULT_VOCAB_SIZE: usize = 800;
pub const DEFAULT_ORDER: usize = 3;

/// Contents of `train_report.json`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainSummary {
    pub scorer: &'static str,
    pub records: usize,
    pub vocab_size: usize,
    pub config: serde_json::Value,
    /// Per-epoch mean token cross-entropy; empty for n-gram models.
    pub loss: Vec<f64>,
    pub token_accuracy: Vec<f64>,
}

/// Writes `vocab.txt`, `scorer.bin` and `train_report.json`.
pub fn train(ctx: &Context, args: TrainArgs) -> Result<()> {
    let cfg = &ctx.config;
    let path = args
        .train
        .unwrap_or_else(|| cfg.corpus.input.clone().unwrap_or_else(|| ctx.path("train.jsonl")));
    let kind = match args.scorer {
        Some(kind) => kind,
        None => match cfg.scorer.kind.as_deref() {
            None | Some("ngram") => ScorerArg::Ngram,
            Some("transformer") => ScorerArg::Transformer,
            Some(other) => bail!("unknown scorer kind {other:?}; expected ngram or transformer"),
        },
    };
    let vocab_size = args
        .vocab_size
        .or(cfg.tokenizer.vocab_size)
        .unwrap_or(DEFAULT_VOCAB_SIZE);
    let min_frequency = args.min_frequency.or(cfg.tokenizer.min_frequency).unwrap_or(1);

    // Resolve and validate everything before touching the output directory.
    let transformer = match kind {
        ScorerArg::Transformer => {
            let preset = args
                .preset
                .as_deref()
                .or(cfg.scorer.preset.as_deref())
                .unwrap_or("desk");
            let mut c = TransformerConfig::preset(preset)?;
            cfg.transformer.apply(&mut c);
            if let Some(epochs) = args.epochs {
                c.epochs = epochs;
            }
            c.seed = ctx.seed;
            c.validate()?;
            Some(c)
        }
        ScorerArg::Ngram => None,
    };
    let order = args.order.or(cfg.scorer.order).unwrap_or(DEFAULT_ORDER);
    let weights = args
        .weights
        .or_else(|| cfg.scorer.weights.clone())
        .unwrap_or_else(|| NgramScorer::default_weights(order));
    require_file(&path, "training file")?;

    let records = load_records(&path, Format::from_path(&path))?;
    if records.is_empty() {
        bail!("{} holds no records", path.display());
    }
    let texts: Vec<&str> = records
        .iter()
        .flat_map(|r| [r.label.as_str(), r.instruction.as_str()])
        .collect();
    let vocab = Vocabulary::train(&texts, vocab_size, min_frequency)
        .context("cannot train the tokenizer")?;

    let (scorer, summary): (ScorerHandle, TrainSummary) = match transformer {
        None => {
            let scorer = train_ngram(&records, &vocab, order, weights)?;
            let summary = TrainSummary {
                scorer: "ngram",
                records: records.len(),
                vocab_size: vocab.len(),
                config: serde_json::to_value(scorer.config())?,
                loss: Vec::new(),
                token_accuracy: Vec::new(),
            };
            (scorer.into(), summary)
        }
        Some(config) => {
            let (scorer, report) = train_transformer(&records, &vocab, &config)?;
            let summary = TrainSummary {
                scorer: "transformer",
                records: records.len(),
                vocab_size: vocab.len(),
                config: serde_json::to_value(&config)?,
                loss: report.loss,
                token_accuracy: report.token_accuracy,
            };
            (scorer.into(), summary)
        }
    };
    write_bytes(&ctx.path("vocab.txt"), vocab.to_text().as_bytes())?;
    write_bytes(&ctx.path("scorer.bin"), &scorer.to_bytes())?;
    write_json(&ctx.path("train_report.json"), &summary)?;
    println!(
        "trained {} scorer on {} records (vocabulary {}) into {}",
        summary.scorer,
        summary.records,
        summary.vocab_size,
        ctx.out.display()
    );
    Ok(())
}
