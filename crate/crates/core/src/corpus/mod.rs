//! `(label, instruction)` records: loading, synthetic generation, outlier
//! filtering and train/validation splitting.

mod io;
mod synthetic;

use std::collections::HashMap;
use std::fmt;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub use io::{
    load_annotated, load_records, read_annotated, read_records, write_annotated, write_records,
    Format,
};
pub use synthetic::{
    annotate_with_gazetteers, generate_for_labels, generate_synthetic_corpus, Gazetteers,
    GAZETTEERS,
};
pub(crate) use synthetic::token_offsets;

/// A drug label and one prescription line written for it.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Record {
    pub label: String,
    #[serde(alias = "text")]
    pub instruction: String,
}

impl Record {
    /// Builds a record from trimmed text, rejecting empty fields and control
    /// characters.
    pub fn new(label: impl AsRef<str>, instruction: impl AsRef<str>) -> Result<Self> {
        let record = Record {
            label: label.as_ref().trim().to_string(),
            instruction: instruction.as_ref().trim().to_string(),
        };
        record.validate()?;
        Ok(record)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, value) in [("label", &self.label), ("instruction", &self.instruction)] {
            if value.is_empty() {
                return Err(Error::InvalidRecord(format!("{name} is empty")));
            }
            if value.chars().any(|c| c.is_control()) {
                return Err(Error::InvalidRecord(format!(
                    "{name} contains a control character"
                )));
            }
        }
        Ok(())
    }
}

/// The five entity types recognised in prescriptions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Entity {
    Drug,
    Strength,
    Form,
    Route,
    Frequency,
}

impl Entity {
    pub const ALL: [Entity; 5] = [
        Entity::Drug,
        Entity::Strength,
        Entity::Form,
        Entity::Route,
        Entity::Frequency,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Entity::Drug => "Drug",
            Entity::Strength => "Strength",
            Entity::Form => "Form",
            Entity::Route => "Route",
            Entity::Frequency => "Frequency",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Entity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A byte range `[start, end)` of an instruction tagged with an entity.
///
/// Serialized as the triple `[start, end, "Entity"]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(from = "(usize, usize, Entity)", into = "(usize, usize, Entity)")]
pub struct Span {
    pub start: usize,
    pub end: usize,
    pub entity: Entity,
}

impl From<(usize, usize, Entity)> for Span {
    fn from((start, end, entity): (usize, usize, Entity)) -> Self {
        Span { start, end, entity }
    }
}

impl From<Span> for (usize, usize, Entity) {
    fn from(span: Span) -> Self {
        (span.start, span.end, span.entity)
    }
}

/// A record with gold entity spans over its instruction.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotatedRecord {
    #[serde(flatten)]
    pub record: Record,
    #[serde(default)]
    pub spans: Vec<Span>,
}

impl AnnotatedRecord {
    pub fn new(record: Record, spans: Vec<Span>) -> Result<Self> {
        let annotated = AnnotatedRecord { record, spans };
        annotated.validate()?;
        Ok(annotated)
    }

    pub fn span_text(&self, span: &Span) -> &str {
        &self.record.instruction[span.start..span.end]
    }

    /// Checks the span invariants: in bounds, on character boundaries, sorted,
    /// non-overlapping, and exactly one `Drug` span spelling the label.
    pub fn validate(&self) -> Result<()> {
        self.record.validate()?;
        self.validate_spans()?;
        let drugs: Vec<&Span> = self
            .spans
            .iter()
            .filter(|s| s.entity == Entity::Drug)
            .collect();
        if drugs.len() != 1 {
            return Err(Error::Annotation(format!(
                "expected exactly one Drug span, found {}",
                drugs.len()
            )));
        }
        if !self
            .span_text(drugs[0])
            .eq_ignore_ascii_case(&self.record.label)
        {
            return Err(Error::Annotation(format!(
                "Drug span {:?} does not match label {:?}",
                self.span_text(drugs[0]),
                self.record.label
            )));
        }
        Ok(())
    }

    /// The structural half of [`validate`](Self::validate): bounds, ordering
    /// and overlap only.
    pub fn validate_spans(&self) -> Result<()> {
        let text = &self.record.instruction;
        let mut previous_end = 0;
        for (i, span) in self.spans.iter().enumerate() {
            if span.start >= span.end || span.end > text.len() {
                return Err(Error::Annotation(format!(
                    "span {}..{} out of bounds for instruction of {} bytes",
                    span.start,
                    span.end,
                    text.len()
                )));
            }
            if !text.is_char_boundary(span.start) || !text.is_char_boundary(span.end) {
                return Err(Error::Annotation(format!(
                    "span {}..{} splits a character",
                    span.start, span.end
                )));
            }
            if i > 0 && span.start < previous_end {
                return Err(Error::Annotation(format!(
                    "span {}..{} overlaps or precedes the previous span",
                    span.start, span.end
                )));
            }
            previous_end = span.end;
        }
        Ok(())
    }
}

/// Train and validation partitions of a source corpus plus a separately
/// supplied test set.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct SplitCorpus<T = Record> {
    pub train: Vec<T>,
    pub valid: Vec<T>,
    pub test: Vec<T>,
}

/// Which length statistic [`filter_outliers_by`] measures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LengthUnit {
    /// Whitespace-separated tokens.
    #[default]
    Tokens,
    /// Unicode scalar values.
    Chars,
}

impl LengthUnit {
    fn measure(self, text: &str) -> f64 {
        match self {
            LengthUnit::Tokens => text.split_whitespace().count() as f64,
            LengthUnit::Chars => text.chars().count() as f64,
        }
    }
}

/// Removes records whose label or instruction token count falls outside the
/// Tukey fence `[Q1 - k*IQR, Q3 + k*IQR]`.
pub fn filter_outliers(records: &[Record], k: f64) -> Vec<Record> {
    filter_outliers_by(records, k, LengthUnit::Tokens)
}

pub fn filter_outliers_by(records: &[Record], k: f64, unit: LengthUnit) -> Vec<Record> {
    let keep = outlier_mask(records, k, unit);
    records
        .iter()
        .zip(keep)
        .filter(|&(_, keep)| keep)
        .map(|(r, _)| r.clone())
        .collect()
}

/// `true` for every record that survives the fence. Fewer than four records
/// always pass.
pub fn outlier_mask(records: &[Record], k: f64, unit: LengthUnit) -> Vec<bool> {
    if records.len() < 4 {
        return vec![true; records.len()];
    }
    let labels: Vec<f64> = records.iter().map(|r| unit.measure(&r.label)).collect();
    let instructions: Vec<f64> = records
        .iter()
        .map(|r| unit.measure(&r.instruction))
        .collect();
    let (label_lo, label_hi) = tukey_fence(&labels, k);
    let (instr_lo, instr_hi) = tukey_fence(&instructions, k);
    labels
        .iter()
        .zip(&instructions)
        .map(|(&l, &i)| (label_lo..=label_hi).contains(&l) && (instr_lo..=instr_hi).contains(&i))
        .collect()
}

fn tukey_fence(values: &[f64], k: f64) -> (f64, f64) {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let q1 = quantile(&sorted, 0.25);
    let q3 = quantile(&sorted, 0.75);
    let iqr = q3 - q1;
    (q1 - k * iqr, q3 + k * iqr)
}

/// Linear-interpolation quantile over sorted data.
pub(crate) fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Shuffles `records` with `seed` and holds out a tenth (rounded to nearest,
/// halves up) for validation. Each partition keeps source order.
pub fn split_corpus<T: Clone>(records: &[T], seed: u64) -> Result<SplitCorpus<T>> {
    if records.len() < 10 {
        return Err(Error::TooFewRecords {
            needed: 10,
            got: records.len(),
        });
    }
    let mut order: Vec<usize> = (0..records.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_valid = (records.len() as f64 / 10.0).round() as usize;
    let mut valid_idx = order[..n_valid].to_vec();
    let mut train_idx = order[n_valid..].to_vec();
    valid_idx.sort_unstable();
    train_idx.sort_unstable();
    Ok(SplitCorpus {
        train: train_idx.iter().map(|&i| records[i].clone()).collect(),
        valid: valid_idx.iter().map(|&i| records[i].clone()).collect(),
        test: Vec::new(),
    })
}

/// Repeats every label `multiplier` times per occurrence, grouped by label in
/// order of first appearance.
pub fn expand_labels(records: &[Record], multiplier: usize) -> Vec<String> {
    label_counts(records)
        .into_iter()
        .flat_map(|(label, count)| std::iter::repeat_n(label, count * multiplier))
        .collect()
}

/// Distinct labels with their occurrence counts, in order of first appearance.
pub fn label_counts(records: &[Record]) -> Vec<(String, usize)> {
    let mut index: HashMap<&str, usize> = HashMap::new();
    let mut counts: Vec<(String, usize)> = Vec::new();
    for record in records {
        match index.get(record.label.as_str()) {
            Some(&i) => counts[i].1 += 1,
            None => {
                index.insert(&record.label, counts.len());
                counts.push((record.label.clone(), 1));
            }
        }
    }
    counts
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(label: &str, words: usize) -> Record {
        Record::new(label, vec!["w"; words].join(" ")).unwrap()
    }

    #[test]
    fn record_rejects_empty_and_control() {
        assert!(Record::new(" ", "x").is_err());
        assert!(Record::new("x", "").is_err());
        assert!(Record::new("x", "a\u{7}b").is_err());
        assert_eq!(Record::new(" a ", " b c ").unwrap().instruction, "b c");
    }

    #[test]
    fn long_instruction_is_filtered() {
        // Q1 = Q3 = 10 over the 21 lengths, so the fence collapses to [10, 10].
        let mut records: Vec<Record> = (0..20).map(|i| rec(&format!("d{i}"), 10)).collect();
        records.push(rec("long", 400));
        let kept = filter_outliers(&records, 1.5);
        assert_eq!(kept.len(), 20);
        assert!(kept.iter().all(|r| r.label != "long"));
    }

    #[test]
    fn uniform_lengths_pass_through() {
        let records: Vec<Record> = (0..12).map(|i| rec(&format!("d{i}"), 7)).collect();
        assert_eq!(filter_outliers(&records, 1.5), records);
        assert_eq!(filter_outliers(&records[..1], 1.5), records[..1].to_vec());
    }

    #[test]
    fn fence_uses_interpolated_quartiles() {
        // lengths 1..=8: Q1 = 2.75, Q3 = 6.25, IQR = 3.5, k = 0.1 -> [2.4, 6.6]
        let records: Vec<Record> = (1..=8).map(|n| rec("d", n)).collect();
        let kept: Vec<usize> = filter_outliers(&records, 0.1)
            .iter()
            .map(|r| r.instruction.split_whitespace().count())
            .collect();
        assert_eq!(kept, vec![3, 4, 5, 6]);
    }

    #[test]
    fn split_ratio_and_partition() {
        let records: Vec<Record> = (0..100).map(|i| rec(&format!("d{i}"), 3)).collect();
        let split = split_corpus(&records, 7).unwrap();
        assert_eq!((split.train.len(), split.valid.len()), (90, 10));
        let mut all: Vec<_> = split.train.iter().chain(&split.valid).cloned().collect();
        all.sort_by(|a, b| a.label.cmp(&b.label));
        let mut expected = records.clone();
        expected.sort_by(|a, b| a.label.cmp(&b.label));
        assert_eq!(all, expected);
        assert_eq!(split, split_corpus(&records, 7).unwrap());
        assert_ne!(split.valid, split_corpus(&records, 8).unwrap().valid);

        let split = split_corpus(&records[..95], 1).unwrap();
        assert!((85..=86).contains(&split.train.len()));
        assert!(matches!(
            split_corpus(&records[..9], 1),
            Err(Error::TooFewRecords { .. })
        ));
    }

    #[test]
    fn expand_labels_counts() {
        let records = vec![rec("x", 1), rec("y", 1), rec("x", 2)];
        let expanded = expand_labels(&records, 5);
        assert_eq!(expanded.iter().filter(|l| *l == "x").count(), 10);
        assert_eq!(expanded.len(), 15);
        assert_eq!(&expanded[..10], vec!["x"; 10].as_slice());
        assert_eq!(expand_labels(&records, 1), vec!["x", "x", "y"]);
        assert!(expand_labels(&[], 3).is_empty());
    }

    #[test]
    fn annotation_invariants() {
        let record = Record::new("aspirin", "aspirin 81 mg Tablet").unwrap();
        let ok = AnnotatedRecord::new(
            record.clone(),
            vec![
                Span::from((0, 7, Entity::Drug)),
                Span::from((8, 13, Entity::Strength)),
            ],
        );
        assert!(ok.is_ok());
        let overlapping = AnnotatedRecord::new(
            record.clone(),
            vec![
                Span::from((0, 7, Entity::Drug)),
                Span::from((5, 13, Entity::Strength)),
            ],
        );
        assert!(matches!(overlapping, Err(Error::Annotation(_))));
        let no_drug = AnnotatedRecord::new(record, vec![Span::from((8, 13, Entity::Strength))]);
        assert!(no_drug.is_err());
    }
}
