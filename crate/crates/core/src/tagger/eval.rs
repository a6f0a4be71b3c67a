use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};

use super::{tags_to_spans, token_spans, tokenize, TaggerModel, TokenSpan};
use crate::corpus::{AnnotatedRecord, Entity};

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct EntityScore {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub true_positives: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
}

impl EntityScore {
    /// Precision is 0 with no predictions and recall 0 with no gold spans.
    pub fn from_counts(tp: usize, fp: usize, fn_: usize) -> Self {
        let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        let precision = ratio(tp, tp + fp);
        let recall = ratio(tp, tp + fn_);
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        EntityScore {
            precision,
            recall,
            f1,
            true_positives: tp,
            false_positives: fp,
            false_negatives: fn_,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NerScore {
    pub per_entity: BTreeMap<Entity, EntityScore>,
    /// Mean F1 over the five entity types.
    pub macro_f1: f64,
}

impl NerScore {
    pub fn entity(&self, entity: Entity) -> EntityScore {
        self.per_entity[&entity]
    }

    /// Builds scores from `(gold, predicted)` span sets per record.
    pub fn from_spans<'a>(
        pairs: impl IntoIterator<Item = (&'a [TokenSpan], &'a [TokenSpan])>,
    ) -> Self {
        let mut counts = [(0usize, 0usize, 0usize); 5];
        for (gold, predicted) in pairs {
            let gold: HashSet<&TokenSpan> = gold.iter().collect();
            let predicted: HashSet<&TokenSpan> = predicted.iter().collect();
            for span in &predicted {
                let c = &mut counts[span.entity.index()];
                if gold.contains(span) {
                    c.0 += 1;
                } else {
                    c.1 += 1;
                }
            }
            for span in gold.difference(&predicted) {
                counts[span.entity.index()].2 += 1;
            }
        }
        let per_entity: BTreeMap<Entity, EntityScore> = Entity::ALL
            .iter()
            .map(|&e| {
                let (tp, fp, fn_) = counts[e.index()];
                (e, EntityScore::from_counts(tp, fp, fn_))
            })
            .collect();
        let macro_f1 = per_entity.values().map(|s| s.f1).sum::<f64>() / Entity::ALL.len() as f64;
        NerScore {
            per_entity,
            macro_f1,
        }
    }
}

/// Exact span matching: a prediction counts only if its boundaries and type
/// both match a gold span.
pub fn evaluate_ner(model: &TaggerModel, gold: &[AnnotatedRecord]) -> NerScore {
    let pairs: Vec<(Vec<TokenSpan>, Vec<TokenSpan>)> = gold
        .iter()
        .map(|record| {
            let tokens = tokenize(&record.record.instruction);
            let expected = token_spans(record, &tokens.offsets);
            let predicted = tags_to_spans(&model.tag(&tokens.words));
            (expected, predicted)
        })
        .collect();
    NerScore::from_spans(pairs.iter().map(|(g, p)| (g.as_slice(), p.as_slice())))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn span(start: usize, end: usize, entity: Entity) -> TokenSpan {
        TokenSpan { start, end, entity }
    }

    #[test]
    fn half_recall() {
        let gold_a = [span(0, 1, Entity::Drug)];
        let gold_b = [span(0, 2, Entity::Drug)];
        let pred_a = [span(0, 1, Entity::Drug)];
        let score = NerScore::from_spans([(&gold_a[..], &pred_a[..]), (&gold_b[..], &[][..])]);
        let drug = score.entity(Entity::Drug);
        assert_eq!(drug.precision, 1.0);
        assert_eq!(drug.recall, 0.5);
        assert!((drug.f1 - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn nothing_predicted() {
        let gold = [span(0, 1, Entity::Drug), span(1, 2, Entity::Route)];
        let score = NerScore::from_spans([(&gold[..], &[][..])]);
        assert!(score.per_entity.values().all(|s| s.f1 == 0.0 && s.precision == 0.0));
        assert_eq!(score.macro_f1, 0.0);
    }

    #[test]
    fn boundary_mismatch_is_wrong() {
        let gold = [span(0, 2, Entity::Drug)];
        let pred = [span(0, 1, Entity::Drug)];
        let score = NerScore::from_spans([(&gold[..], &pred[..])]);
        assert_eq!(score.entity(Entity::Drug).true_positives, 0);
    }
}
