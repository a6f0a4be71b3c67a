use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use super::{bleu, rouge_l, rouge_n};
use crate::corpus::Record;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelScores {
    pub count: usize,
    pub bleu: f64,
    pub rouge1: f64,
    pub rouge2: f64,
    #[serde(rename = "rougeL")]
    pub rouge_l: f64,
}

/// Corpus-level scores plus a breakdown per label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub bleu: f64,
    pub rouge1: f64,
    pub rouge2: f64,
    #[serde(rename = "rougeL")]
    pub rouge_l: f64,
    pub per_label: BTreeMap<String, LabelScores>,
}

/// Scores `(label, text)` generations. Every reference instruction sharing a
/// generation's label is one of its references.
pub fn evaluate(generations: &[(String, String)], references: &[Record]) -> Result<EvalReport> {
    if generations.is_empty() {
        return Err(Error::Input("no generations to evaluate".into()));
    }
    let mut by_label: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for r in references {
        by_label
            .entry(&r.label)
            .or_default()
            .push(&r.instruction);
    }
    let mut refs = Vec::with_capacity(generations.len());
    for (label, _) in generations {
        let r = by_label
            .get(label.as_str())
            .ok_or_else(|| Error::Input(format!("no reference for label {label:?}")))?;
        refs.push(r.clone());
    }
    let texts: Vec<&str> = generations.iter().map(|(_, t)| t.as_str()).collect();
    let corpus = scores(&texts, &refs)?;

    let mut groups: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, (label, _)) in generations.iter().enumerate() {
        groups.entry(label).or_default().push(i);
    }
    let mut per_label = BTreeMap::new();
    for (label, idx) in groups {
        let texts: Vec<&str> = idx.iter().map(|&i| texts[i]).collect();
        let refs: Vec<Vec<&str>> = idx.iter().map(|&i| refs[i].clone()).collect();
        per_label.insert(label.to_string(), scores(&texts, &refs)?);
    }
    Ok(EvalReport {
        bleu: corpus.bleu,
        rouge1: corpus.rouge1,
        rouge2: corpus.rouge2,
        rouge_l: corpus.rouge_l,
        per_label,
    })
}

fn scores(texts: &[&str], refs: &[Vec<&str>]) -> Result<LabelScores> {
    let n = texts.len() as f64;
    let mut rouge1 = 0.0;
    let mut rouge2 = 0.0;
    let mut rouge_lsum = 0.0;
    for (text, r) in texts.iter().zip(refs) {
        rouge1 += rouge_n(text, r, 1)?;
        rouge2 += rouge_n(text, r, 2)?;
        rouge_lsum += rouge_l(text, r)?;
    }
    Ok(LabelScores {
        count: texts.len(),
        bleu: bleu(texts, refs)?,
        rouge1: rouge1 / n,
        rouge2: rouge2 / n,
        rouge_l: rouge_lsum / n,
    })
}

/// One row per label, then a `__corpus__` row.
pub fn write_csv(mut writer: impl Write, report: &EvalReport) -> Result<()> {
    let io = |e| Error::io("<writer>", e);
    writeln!(writer, "label,count,bleu,rouge1,rouge2,rougeL").map_err(io)?;
    let mut total = 0;
    for (label, s) in &report.per_label {
        total += s.count;
        writeln!(
            writer,
            "{},{},{:.6},{:.6},{:.6},{:.6}",
            csv_field(label),
            s.count,
            s.bleu,
            s.rouge1,
            s.rouge2,
            s.rouge_l
        )
        .map_err(io)?;
    }
    writeln!(
        writer,
        "__corpus__,{total},{:.6},{:.6},{:.6},{:.6}",
        report.bleu, report.rouge1, report.rouge2, report.rouge_l
    )
    .map_err(io)
}

pub(crate) fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(label: &str, text: &str) -> Record {
        Record::new(label, text).unwrap()
    }

    #[test]
    fn self_reference_scores_100() {
        let refs = vec![rec("a", "x y z w"), rec("b", "p q r s")];
        let gens: Vec<(String, String)> = refs
            .iter()
            .map(|r| (r.label.clone(), r.instruction.clone()))
            .collect();
        let report = evaluate(&gens, &refs).unwrap();
        assert!((report.bleu - 100.0).abs() < 1e-9);
        assert!((report.rouge_l - 100.0).abs() < 1e-9);
        assert_eq!(report.per_label.len(), 2);
        let mut csv = Vec::new();
        write_csv(&mut csv, &report).unwrap();
        let csv = String::from_utf8(csv).unwrap();
        assert_eq!(csv.lines().count(), 4);
        assert!(csv.lines().last().unwrap().starts_with("__corpus__,2,100.000000"));
    }

    #[test]
    fn missing_reference_label() {
        let gens = vec![("zzz".to_string(), "x".to_string())];
        assert!(evaluate(&gens, &[rec("a", "x")]).is_err());
    }

    #[test]
    fn quoting() {
        assert_eq!(csv_field("a,b"), "\"a,b\"");
        assert_eq!(csv_field("plain"), "plain");
    }
}
