use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context as _, Result};
use clap::Args;
use labelgen::corpus::{annotate_with_gazetteers, load_annotated, load_records, AnnotatedRecord, Format};
use labelgen::decode::GenerationRecord;
use labelgen::metrics::{evaluate as score, jaccard_diversity, write_csv};
use labelgen::tagger::{mixture_experiment, write_mixture_csv};

use super::group_by_label;
use crate::output::{write_atomic, write_json};
use crate::{require_file, Context};

#[derive(Debug, Clone, Default, Args)]
pub struct EvaluateArgs {
    /// Generations to score (default: <out>/generations.jsonl).
    #[arg(long)]
    pub generations: Option<PathBuf>,
    /// Reference records (default: <out>/test.jsonl).
    #[arg(long)]
    pub references: Option<PathBuf>,
    /// Also run the real/synthetic/combined tagger experiment.
    #[arg(long)]
    pub ner: bool,
    /// Annotated real training records for the tagger (default: <out>/train.jsonl).
    #[arg(long)]
    pub real: Option<PathBuf>,
    /// Annotated held-out records for the tagger (default: the references).
    #[arg(long)]
    pub ner_test: Option<PathBuf>,
    /// Comma-separated training-size multiples in [1, 5].
    #[arg(long, value_delimiter = ',')]
    pub steps: Option<Vec<f64>>,
    #[arg(long)]
    pub tagger_epochs: Option<usize>,
}

const DEFAULT_STEPS: [f64; 5] = [1.0, 2.0, 3.0, 4.0, 5.0];
const DEFAULT_TAGGER_EPOCHS: usize = 10;

pub fn read_generations(path: &Path) -> Result<Vec<GenerationRecord>> {
    let file = File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.with_context(|| format!("cannot read {}", path.display()))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(
            serde_json::from_str(&line)
                .with_context(|| format!("{}: malformed row {}", path.display(), i + 1))?,
        );
    }
    Ok(out)
}

/// Writes `eval.json`, `eval.csv` and `diversity.json`; with `--ner` also
/// `ner.csv` and `ner.json`.
pub fn evaluate(ctx: &Context, args: EvaluateArgs) -> Result<()> {
    let cfg = &ctx.config.evaluate;
    let generations_path = args.generations.unwrap_or_else(|| ctx.path("generations.jsonl"));
    let references_path = args.references.unwrap_or_else(|| ctx.path("test.jsonl"));
    let ner = args.ner || cfg.ner == Some(true);
    let steps = args
        .steps
        .or_else(|| cfg.steps.clone())
        .unwrap_or_else(|| DEFAULT_STEPS.to_vec());
    if let Some(bad) = steps.iter().find(|s| !(1.0..=5.0).contains(*s)) {
        bail!("step {bad} outside [1, 5]");
    }
    let epochs = args
        .tagger_epochs
        .or(cfg.tagger_epochs)
        .unwrap_or(DEFAULT_TAGGER_EPOCHS);
    let real_path = args.real.unwrap_or_else(|| ctx.path("train.jsonl"));
    let ner_test_path = args.ner_test.unwrap_or_else(|| references_path.clone());
    require_file(&generations_path, "generations file")?;
    require_file(&references_path, "reference file")?;
    if ner {
        require_file(&real_path, "real training file")?;
        require_file(&ner_test_path, "tagger test file")?;
    }

    let generations = read_generations(&generations_path)?;
    let references = load_records(&references_path, Format::from_path(&references_path))?;
    let pairs: Vec<(String, String)> = generations
        .iter()
        .map(|g| (g.label.clone(), g.text.clone()))
        .collect();
    let report = score(&pairs, &references)?;
    write_json(&ctx.path("eval.json"), &report)?;
    write_atomic(&ctx.path("eval.csv"), |w| write_csv(w, &report))?;
    println!(
        "BLEU {:.2}  ROUGE-1 {:.2}  ROUGE-2 {:.2}  ROUGE-L {:.2}",
        report.bleu, report.rouge1, report.rouge2, report.rouge_l
    );

    let groups = group_by_label(pairs.iter().map(|(l, t)| (l.as_str(), t.as_str())));
    match jaccard_diversity(&groups) {
        Ok(diversity) => {
            println!("median Jaccard {:.3}", diversity.median_jaccard);
            write_json(&ctx.path("diversity.json"), &diversity)?;
        }
        Err(e) => log::warn!("diversity not computed: {e}"),
    }

    if ner {
        let real = load_spanned(&real_path)?;
        let test = load_spanned(&ner_test_path)?;
        let synthetic: Vec<AnnotatedRecord> = generations
            .iter()
            .filter_map(|g| annotate_with_gazetteers(&g.label, &g.text))
            .collect();
        if synthetic.len() < generations.len() {
            log::warn!(
                "{} of {} generations could not be annotated and were left out",
                generations.len() - synthetic.len(),
                generations.len()
            );
        }
        let rows = mixture_experiment(&real, &synthetic, &test, &steps, ctx.seed, epochs)?;
        write_atomic(&ctx.path("ner.csv"), |w| write_mixture_csv(w, &rows))?;
        write_json(&ctx.path("ner.json"), &rows)?;
        for row in &rows {
            println!("{:<9} x{}  macro F1 {:.3}", row.arm, row.step, row.score.macro_f1);
        }
    }
    Ok(())
}

fn load_spanned(path: &Path) -> Result<Vec<AnnotatedRecord>> {
    let records = load_annotated(path)?;
    if records.iter().any(|r| r.spans.is_empty()) {
        bail!(
            "{} has records without entity spans; the tagger needs an annotated corpus",
            path.display()
        );
    }
    Ok(records)
}
