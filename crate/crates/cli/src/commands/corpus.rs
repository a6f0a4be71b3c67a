use std::collections::HashSet;
use std::path::PathBuf;

use anyhow::{bail, Result};
use clap::Args;
use labelgen::corpus::{
    generate_for_labels, generate_synthetic_corpus, label_counts, load_records, outlier_mask,
    split_corpus, write_annotated, write_records, AnnotatedRecord, Format, LengthUnit, Record,
};

use crate::output::write_atomic;
use crate::{require_file, Context};

#[derive(Debug, Clone, Default, Args)]
pub struct CorpusArgs {
    /// Generate an annotated synthetic corpus instead of reading one.
    #[arg(long, conflicts_with = "input")]
    pub synthetic: bool,
    /// Records to split (TSV or JSONL).
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Input format; guessed from the extension when omitted.
    #[arg(long)]
    pub format: Option<Format>,
    /// Held-out test records, copied through unchanged.
    #[arg(long)]
    pub test: Option<PathBuf>,
    /// Number of synthetic drug labels.
    #[arg(long)]
    pub labels: Option<usize>,
    /// Synthetic prescriptions per label.
    #[arg(long)]
    pub per_label: Option<usize>,
    /// Tukey fence multiplier for outlier removal.
    #[arg(long)]
    pub filter_k: Option<f64>,
    #[arg(long, value_parser = parse_unit)]
    pub length_unit: Option<LengthUnit>,
}

fn parse_unit(s: &str) -> Result<LengthUnit, String> {
    match s {
        "tokens" => Ok(LengthUnit::Tokens),
        "chars" => Ok(LengthUnit::Chars),
        other => Err(format!("unknown length unit {other:?}; expected tokens or chars")),
    }
}

const DEFAULT_LABELS: usize = 40;
const DEFAULT_PER_LABEL: usize = 5;
const DEFAULT_FILTER_K: f64 = 1.5;

/// Writes `train.jsonl`, `valid.jsonl` and `test.jsonl` to the output
/// directory. Synthetic corpora keep their entity spans.
pub fn corpus(ctx: &Context, args: CorpusArgs) -> Result<()> {
    let cfg = &ctx.config.corpus;
    let input = args.input.or_else(|| cfg.input.clone());
    let synthetic = args.synthetic || (input.is_none() && cfg.synthetic == Some(true));
    let test_path = args.test.or_else(|| cfg.test.clone());
    let k = args.filter_k.or(cfg.filter_k).unwrap_or(DEFAULT_FILTER_K);
    let unit = args.length_unit.or(cfg.length_unit).unwrap_or_default();
    if k.is_nan() || k <= 0.0 {
        bail!("--filter-k must be positive");
    }
    if let Some(path) = &test_path {
        require_file(path, "test file")?;
    }

    if synthetic {
        let labels = args.labels.or(cfg.labels).unwrap_or(DEFAULT_LABELS);
        let per_label = args.per_label.or(cfg.per_label).unwrap_or(DEFAULT_PER_LABEL);
        let records = generate_synthetic_corpus(ctx.seed, labels, per_label)?;
        let records = filter(records, |r| &r.record, k, unit);
        let split = split_corpus(&records, ctx.seed)?;
        let test = match &test_path {
            Some(path) => labelgen::corpus::load_annotated(path)?,
            None => synthetic_test(ctx.seed, &split.train, &split.valid, per_label)?,
        };
        for (name, part) in [("train", &split.train), ("valid", &split.valid), ("test", &test)] {
            write_atomic(&ctx.path(&format!("{name}.jsonl")), |w| write_annotated(w, part))?;
        }
        report(ctx, split.train.len(), split.valid.len(), test.len());
        return Ok(());
    }

    let Some(input) = input else {
        bail!("either --synthetic or --input is required");
    };
    require_file(&input, "input file")?;
    let format = args.format.unwrap_or_else(|| Format::from_path(&input));
    let records = load_records(&input, format)?;
    let records = filter(records, |r| r, k, unit);
    let split = split_corpus(&records, ctx.seed)?;
    let test = match &test_path {
        Some(path) => load_records(path, Format::from_path(path))?,
        None => {
            log::warn!("no --test file given; test.jsonl will be empty");
            Vec::new()
        }
    };
    for (name, part) in [("train", &split.train), ("valid", &split.valid), ("test", &test)] {
        write_atomic(&ctx.path(&format!("{name}.jsonl")), |w| {
            write_records(w, part, Format::Jsonl)
        })?;
    }
    report(ctx, split.train.len(), split.valid.len(), test.len());
    Ok(())
}

fn filter<T>(records: Vec<T>, record: impl Fn(&T) -> &Record, k: f64, unit: LengthUnit) -> Vec<T> {
    let plain: Vec<Record> = records.iter().map(|r| record(r).clone()).collect();
    let keep = outlier_mask(&plain, k, unit);
    let before = records.len();
    let kept: Vec<T> = records
        .into_iter()
        .zip(keep)
        .filter_map(|(r, keep)| keep.then_some(r))
        .collect();
    if kept.len() < before {
        log::info!("removed {} outliers", before - kept.len());
    }
    kept
}

/// A fresh draw for the labels of the corpus, one record per five training
/// samples, excluding any instruction already in train or valid.
fn synthetic_test(
    seed: u64,
    train: &[AnnotatedRecord],
    valid: &[AnnotatedRecord],
    per_label: usize,
) -> Result<Vec<AnnotatedRecord>> {
    let plain: Vec<Record> = train.iter().chain(valid).map(|r| r.record.clone()).collect();
    let labels: Vec<String> = label_counts(&plain).into_iter().map(|(l, _)| l).collect();
    let seen: HashSet<&str> = plain.iter().map(|r| r.instruction.as_str()).collect();
    let draws = per_label.div_ceil(5).max(1);
    Ok(generate_for_labels(seed.wrapping_add(1), &labels, draws)?
        .into_iter()
        .filter(|r| !seen.contains(r.record.instruction.as_str()))
        .collect())
}

fn report(ctx: &Context, train: usize, valid: usize, test: usize) {
    println!(
        "wrote {train} train, {valid} valid and {test} test records to {}",
        ctx.out.display()
    );
}
