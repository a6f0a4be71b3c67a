//! Averaged-perceptron BIO tagger for the five prescription entities, and the
//! real/synthetic/combined training protocol built on it.

mod align;
mod eval;
mod mixture;

use std::collections::HashMap;
use std::fmt;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::corpus::{AnnotatedRecord, Entity};
use crate::{Error, Result};

pub use align::{byte_spans, spans_to_tags, tags_to_spans, token_spans, tokenize, TokenSpan, Tokens};
pub use eval::{evaluate_ner, EntityScore, NerScore};
pub use mixture::{arm_data, mixture_experiment, write_mixture_csv, Arm, MixtureRow};

pub const N_TAGS: usize = 1 + 2 * Entity::ALL.len();

/// `O`, or `B-X` / `I-X` for an entity `X`. `O` has index 0 so that it wins
/// ties.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Tag(u8);

impl Tag {
    pub const O: Tag = Tag(0);

    pub fn begin(entity: Entity) -> Tag {
        Tag(1 + 2 * entity.index() as u8)
    }

    pub fn inside(entity: Entity) -> Tag {
        Tag(2 + 2 * entity.index() as u8)
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }

    pub fn from_index(i: usize) -> Tag {
        assert!(i < N_TAGS, "tag index {i} out of range");
        Tag(i as u8)
    }

    pub fn entity(self) -> Option<Entity> {
        (self.0 > 0).then(|| Entity::ALL[(self.0 as usize - 1) / 2])
    }

    pub fn is_inside(self) -> bool {
        self.0 > 0 && self.0 & 1 == 0
    }
}

impl fmt::Display for Tag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.entity() {
            None => f.write_str("O"),
            Some(e) if self.is_inside() => write!(f, "I-{e}"),
            Some(e) => write!(f, "B-{e}"),
        }
    }
}

/// Turns every `I-X` not preceded by `B-X` or `I-X` into `B-X`.
pub fn repair(tags: &mut [Tag]) {
    let mut prev = Tag::O;
    for tag in tags.iter_mut() {
        if tag.is_inside() && prev.entity() != tag.entity() {
            *tag = Tag::begin(tag.entity().expect("inside tags have an entity"));
        }
        prev = *tag;
    }
}

fn shape(word: &str) -> String {
    let mut out = String::new();
    for c in word.chars() {
        let class = if c.is_ascii_digit() {
            'd'
        } else if c.is_uppercase() {
            'X'
        } else if c.is_alphabetic() {
            'x'
        } else {
            c
        };
        if !out.ends_with(class) {
            out.push(class);
        }
    }
    out
}

fn features(words: &[&str], i: usize, prev: Tag) -> Vec<String> {
    let word = words[i];
    let before = if i == 0 { "<s>" } else { words[i - 1] };
    let after = words.get(i + 1).copied().unwrap_or("</s>");
    vec![
        "bias".to_string(),
        format!("w={word}"),
        format!("lw={}", word.to_lowercase()),
        format!("shape={}", shape(word)),
        format!("w-1={before}"),
        format!("w+1={after}"),
        format!("t-1={prev}"),
    ]
}

/// Feature weights averaged over every update.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TaggerModel {
    features: HashMap<String, usize>,
    weights: Vec<[f64; N_TAGS]>,
}

impl TaggerModel {
    pub fn feature_count(&self) -> usize {
        self.features.len()
    }

    fn scores(&self, feats: &[String]) -> [f64; N_TAGS] {
        let mut scores = [0.0; N_TAGS];
        for f in feats {
            if let Some(&id) = self.features.get(f) {
                for (s, w) in scores.iter_mut().zip(&self.weights[id]) {
                    *s += w;
                }
            }
        }
        scores
    }

    /// Weights of `feature`, if it was seen in training.
    pub fn weights(&self, feature: &str) -> Option<&[f64; N_TAGS]> {
        self.features.get(feature).map(|&id| &self.weights[id])
    }

    /// Greedy left-to-right tagging followed by BIO repair.
    pub fn tag(&self, words: &[&str]) -> Vec<Tag> {
        let mut tags = self.tag_raw(words);
        repair(&mut tags);
        tags
    }

    fn tag_raw(&self, words: &[&str]) -> Vec<Tag> {
        let mut tags = Vec::with_capacity(words.len());
        let mut prev = Tag::O;
        for i in 0..words.len() {
            let tag = argmax(&self.scores(&features(words, i, prev)));
            tags.push(tag);
            prev = tag;
        }
        tags
    }
}

fn argmax(scores: &[f64; N_TAGS]) -> Tag {
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate() {
        if s > scores[best] {
            best = i;
        }
    }
    Tag::from_index(best)
}

/// Best-scoring tag other than `gold`.
fn rival(scores: &[f64; N_TAGS], gold: Tag) -> Tag {
    let mut best: Option<usize> = None;
    for (i, &s) in scores.iter().enumerate() {
        if i != gold.index() && best.is_none_or(|b| s > scores[b]) {
            best = Some(i);
        }
    }
    Tag::from_index(best.expect("more than one tag"))
}

struct Trainer {
    model: TaggerModel,
    /// Running sums of `step * delta` for the averaging trick.
    stamped: Vec<[f64; N_TAGS]>,
    step: f64,
}

impl Trainer {
    fn feature_id(&mut self, f: &str) -> usize {
        if let Some(&id) = self.model.features.get(f) {
            return id;
        }
        let id = self.model.weights.len();
        self.model.features.insert(f.to_string(), id);
        self.model.weights.push([0.0; N_TAGS]);
        self.stamped.push([0.0; N_TAGS]);
        id
    }

    fn update(&mut self, feats: &[String], gold: Tag, guess: Tag) {
        for f in feats {
            let id = self.feature_id(f);
            self.model.weights[id][gold.index()] += 1.0;
            self.model.weights[id][guess.index()] -= 1.0;
            self.stamped[id][gold.index()] += self.step;
            self.stamped[id][guess.index()] -= self.step;
        }
    }

    fn finish(mut self) -> TaggerModel {
        if self.step > 0.0 {
            for (w, s) in self.model.weights.iter_mut().zip(&self.stamped) {
                for (wi, si) in w.iter_mut().zip(s) {
                    *wi -= si / self.step;
                }
            }
        }
        self.model
    }
}

/// Trains on whitespace tokens of each instruction, shuffling records each
/// epoch with `seed`. With zero epochs every token is tagged `O`.
pub fn train_tagger(data: &[AnnotatedRecord], epochs: usize, seed: u64) -> Result<TaggerModel> {
    if data.is_empty() {
        return Err(Error::Input("no training records".into()));
    }
    let mut examples = Vec::with_capacity(data.len());
    for record in data {
        record.validate_spans()?;
        let tokens = tokenize(&record.record.instruction);
        let gold = spans_to_tags(&token_spans(record, &tokens.offsets), tokens.words.len());
        examples.push((tokens.words, gold));
    }
    let mut trainer = Trainer {
        model: TaggerModel::default(),
        stamped: Vec::new(),
        step: 0.0,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..examples.len()).collect();
    for _ in 0..epochs {
        order.shuffle(&mut rng);
        for &e in &order {
            let (words, gold) = &examples[e];
            let mut prev = Tag::O;
            for i in 0..words.len() {
                trainer.step += 1.0;
                let feats = features(words, i, prev);
                let scores = trainer.model.scores(&feats);
                // Update unless gold wins outright, so tokens that only
                // tie their way to the right answer still get weights.
                let rival = rival(&scores, gold[i]);
                if scores[rival.index()] >= scores[gold[i].index()] {
                    trainer.update(&feats, gold[i], rival);
                }
                prev = argmax(&scores);
            }
        }
    }
    Ok(trainer.finish())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::generate_synthetic_corpus;

    #[test]
    fn tag_layout() {
        assert_eq!(N_TAGS, 11);
        assert_eq!(Tag::begin(Entity::Drug).to_string(), "B-Drug");
        assert_eq!(Tag::inside(Entity::Frequency).to_string(), "I-Frequency");
        assert_eq!(Tag::inside(Entity::Route).entity(), Some(Entity::Route));
        assert_eq!(Tag::O.entity(), None);
    }

    #[test]
    fn repair_rule() {
        let mut tags = vec![Tag::O, Tag::inside(Entity::Drug)];
        repair(&mut tags);
        assert_eq!(tags, vec![Tag::O, Tag::begin(Entity::Drug)]);
        let mut tags = vec![Tag::begin(Entity::Form), Tag::inside(Entity::Route)];
        repair(&mut tags);
        assert_eq!(tags[1], Tag::begin(Entity::Route));
    }

    #[test]
    fn shapes() {
        assert_eq!(shape("100"), "d");
        assert_eq!(shape("(2"), "(d");
        assert_eq!(shape("Tablet"), "Xx");
        assert_eq!(shape("Sig:"), "Xx:");
    }

    #[test]
    fn empty_model_tags_o() {
        let data = generate_synthetic_corpus(1, 2, 2).unwrap();
        let model = train_tagger(&data, 0, 1).unwrap();
        assert_eq!(model.feature_count(), 0);
        assert_eq!(model.tag(&["aspirin", "81", "mg"]), vec![Tag::O; 3]);
    }

    #[test]
    fn memorises_training_records() {
        let data = generate_synthetic_corpus(5, 10, 3).unwrap();
        let model = train_tagger(&data, 10, 2).unwrap();
        for record in &data {
            let tokens = tokenize(&record.record.instruction);
            let gold = spans_to_tags(&token_spans(record, &tokens.offsets), tokens.words.len());
            assert_eq!(model.tag(&tokens.words), gold);
        }
        assert_eq!(model, train_tagger(&data, 10, 2).unwrap());
    }
}
