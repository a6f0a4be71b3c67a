use super::{ngram_counts, words};
use crate::{Error, Result};

fn f1(overlap: usize, cand: usize, reference: usize) -> f64 {
    if overlap == 0 {
        return 0.0;
    }
    let p = overlap as f64 / cand as f64;
    let r = overlap as f64 / reference as f64;
    100.0 * 2.0 * p * r / (p + r)
}

fn check(references: &[impl AsRef<str>]) -> Result<()> {
    if references.is_empty() {
        return Err(Error::Input("ROUGE needs at least one reference".into()));
    }
    Ok(())
}

/// ROUGE-N F1, maximised over references. An empty candidate scores 0.
pub fn rouge_n(candidate: &str, references: &[impl AsRef<str>], n: usize) -> Result<f64> {
    check(references)?;
    if n == 0 {
        return Err(Error::Input("ROUGE-N needs n >= 1".into()));
    }
    let cand = words(candidate);
    let cand_counts = ngram_counts(&cand, n);
    let cand_total = cand.len().saturating_sub(n - 1);
    let mut best: f64 = 0.0;
    for reference in references {
        let reference = words(reference.as_ref());
        let ref_counts = ngram_counts(&reference, n);
        let overlap = cand_counts
            .iter()
            .map(|(gram, &c)| c.min(ref_counts.get(gram).copied().unwrap_or(0)))
            .sum();
        best = best.max(f1(overlap, cand_total, reference.len().saturating_sub(n - 1)));
    }
    Ok(best)
}

/// ROUGE-L F1 from the longest common subsequence, maximised over references.
pub fn rouge_l(candidate: &str, references: &[impl AsRef<str>]) -> Result<f64> {
    check(references)?;
    let cand = words(candidate);
    let mut best: f64 = 0.0;
    for reference in references {
        let reference = words(reference.as_ref());
        best = best.max(f1(lcs(&cand, &reference), cand.len(), reference.len()));
    }
    Ok(best)
}

fn lcs(a: &[&str], b: &[&str]) -> usize {
    let mut row = vec![0usize; b.len() + 1];
    for x in a {
        let mut diag = 0;
        for (j, y) in b.iter().enumerate() {
            let above = row[j + 1];
            row[j + 1] = if x == y {
                diag + 1
            } else {
                above.max(row[j])
            };
            diag = above;
        }
    }
    row[b.len()]
}
