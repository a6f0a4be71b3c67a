use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::corpus::quantile;
use crate::{Error, Result};

/// Intersection over union of the whitespace-token sets of `a` and `b`. Two
/// empty texts are identical.
pub fn jaccard(a: &str, b: &str) -> f64 {
    let a: HashSet<&str> = a.split_whitespace().collect();
    let b: HashSet<&str> = b.split_whitespace().collect();
    let union = a.union(&b).count();
    if union == 0 {
        return 1.0;
    }
    a.intersection(&b).count() as f64 / union as f64
}

/// Lower is more diverse.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiversityReport {
    pub median_jaccard: f64,
    pub mean_jaccard: f64,
    /// Mean pairwise similarity of each scored label.
    pub per_label: BTreeMap<String, f64>,
    /// Labels with fewer than two generations.
    pub skipped_labels: usize,
}

/// Mean pairwise Jaccard similarity within each label, summarised across
/// labels by median and mean.
pub fn jaccard_diversity<S: AsRef<str>>(
    generations: &BTreeMap<String, Vec<S>>,
) -> Result<DiversityReport> {
    let mut per_label = BTreeMap::new();
    let mut skipped = 0;
    for (label, texts) in generations {
        if texts.len() < 2 {
            skipped += 1;
            continue;
        }
        let mut sum = 0.0;
        let mut pairs = 0;
        for i in 0..texts.len() {
            for j in i + 1..texts.len() {
                sum += jaccard(texts[i].as_ref(), texts[j].as_ref());
                pairs += 1;
            }
        }
        per_label.insert(label.clone(), sum / pairs as f64);
    }
    if skipped > 0 {
        log::warn!("{skipped} labels with fewer than two generations skipped");
    }
    if per_label.is_empty() {
        return Err(Error::Input(
            "no label has at least two generations".into(),
        ));
    }
    let mut values: Vec<f64> = per_label.values().copied().collect();
    values.sort_by(f64::total_cmp);
    Ok(DiversityReport {
        median_jaccard: quantile(&values, 0.5),
        mean_jaccard: values.iter().sum::<f64>() / values.len() as f64,
        per_label,
        skipped_labels: skipped,
    })
}
