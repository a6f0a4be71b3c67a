//! Template generator for prescription lines with gold entity spans.
//!
//! Instructions follow the shape of a discharge medication list entry:
//!
//! ```text
//! <drug> <strength> <form> Sig: <quantity> <form> <route> <frequency> [<as-needed clause>]
//! ```

use std::collections::HashSet;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{AnnotatedRecord, Entity, Record, Span};
use crate::{Error, Result};

/// Fixed vocabularies the generator draws slot values from.
#[derive(Debug)]
pub struct Gazetteers {
    pub drugs: &'static [&'static str],
    pub strengths: &'static [&'static str],
    pub forms: &'static [&'static str],
    pub routes: &'static [&'static str],
    pub frequencies: &'static [&'static str],
    pub quantities: &'static [&'static str],
    pub as_needed: &'static [&'static str],
}

impl Gazetteers {
    pub fn entries(&self, entity: Entity) -> &'static [&'static str] {
        match entity {
            Entity::Drug => self.drugs,
            Entity::Strength => self.strengths,
            Entity::Form => self.forms,
            Entity::Route => self.routes,
            Entity::Frequency => self.frequencies,
        }
    }
}

pub static GAZETTEERS: Gazetteers = Gazetteers {
    drugs: &[
        "docusate sodium",
        "senna",
        "acetaminophen",
        "aspirin",
        "metoprolol tartrate",
        "lisinopril",
        "atorvastatin",
        "furosemide",
        "pantoprazole",
        "heparin",
        "insulin glargine",
        "warfarin",
        "amlodipine",
        "simvastatin",
        "levothyroxine",
        "metformin",
        "gabapentin",
        "oxycodone",
        "hydromorphone",
        "lorazepam",
        "quetiapine",
        "sertraline",
        "citalopram",
        "trazodone",
        "tamsulosin",
        "finasteride",
        "prednisone",
        "vancomycin",
        "ciprofloxacin",
        "levofloxacin",
        "amoxicillin",
        "cephalexin",
        "clopidogrel",
        "carvedilol",
        "diltiazem",
        "hydralazine",
        "spironolactone",
        "potassium chloride",
        "magnesium oxide",
        "calcium carbonate",
        "cholecalciferol",
        "folic acid",
        "thiamine",
        "multivitamin",
        "albuterol sulfate",
        "ipratropium bromide",
        "fluticasone",
        "montelukast",
        "omeprazole",
        "famotidine",
        "ondansetron",
        "bisacodyl",
        "polyethylene glycol",
        "lactulose",
        "nystatin",
        "miconazole nitrate",
        "lidocaine",
        "enoxaparin",
        "digoxin",
        "allopurinol",
        "tramadol",
        "haloperidol",
    ],
    strengths: &[
        "5 mg", "10 mg", "20 mg", "25 mg", "40 mg", "50 mg", "81 mg", "100 mg", "250 mg",
        "500 mg", "0.125 mg", "1 g",
    ],
    forms: &[
        "Tablet",
        "Capsule",
        "Solution",
        "Suspension",
        "Patch",
        "Cream",
        "Syringe",
        "Powder",
    ],
    routes: &["PO", "IV", "SC", "Topical", "Sublingual", "PR", "Inhalation"],
    frequencies: &[
        "DAILY (Daily)",
        "BID (2 times a day)",
        "TID (3 times a day)",
        "QID (4 times a day)",
        "Q4H (every 4 hours)",
        "Q6H (every 6 hours)",
        "Q8H (every 8 hours)",
        "Q12H (every 12 hours)",
        "Q24H (every 24 hours)",
        "HS (at bedtime)",
        "QHS (once a day (at bedtime))",
        "every other day",
    ],
    quantities: &["One (1)", "Two (2)", "Three (3)", "1-2", "Half (0.5)"],
    as_needed: &[
        "as needed for constipation.",
        "as needed for pain.",
        "as needed for nausea.",
        "as needed for shortness of breath.",
        "as needed for anxiety.",
        "as needed for fever.",
        "as needed for insomnia.",
    ],
};

const DISTINCT_ATTEMPTS: usize = 10_000;

/// Generates `samples_per_label` distinct prescriptions for each of
/// `n_labels` distinct drugs drawn from the gazetteer.
pub fn generate_synthetic_corpus(
    seed: u64,
    n_labels: usize,
    samples_per_label: usize,
) -> Result<Vec<AnnotatedRecord>> {
    if n_labels == 0 || samples_per_label == 0 {
        return Err(Error::Input(
            "n_labels and samples_per_label must be at least 1".into(),
        ));
    }
    let drugs = GAZETTEERS.drugs;
    if n_labels > drugs.len() {
        return Err(Error::Capacity(format!(
            "{n_labels} labels requested but the drug gazetteer has {}",
            drugs.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut chosen: Vec<&str> = drugs.to_vec();
    chosen.shuffle(&mut rng);
    chosen.truncate(n_labels);
    generate_with(&mut rng, &chosen, samples_per_label)
}

/// Like [`generate_synthetic_corpus`] but for caller-chosen labels, which need
/// not come from the gazetteer.
pub fn generate_for_labels(
    seed: u64,
    labels: &[impl AsRef<str>],
    samples_per_label: usize,
) -> Result<Vec<AnnotatedRecord>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let labels: Vec<&str> = labels.iter().map(|l| l.as_ref()).collect();
    generate_with(&mut rng, &labels, samples_per_label)
}

fn generate_with(
    rng: &mut ChaCha8Rng,
    labels: &[&str],
    samples_per_label: usize,
) -> Result<Vec<AnnotatedRecord>> {
    let mut out = Vec::with_capacity(labels.len() * samples_per_label);
    for label in labels {
        let mut seen = HashSet::new();
        for _ in 0..samples_per_label {
            let mut attempts = 0;
            let record = loop {
                let candidate = sample_prescription(rng, label)?;
                if seen.insert(candidate.record.instruction.clone()) {
                    break candidate;
                }
                attempts += 1;
                if attempts == DISTINCT_ATTEMPTS {
                    return Err(Error::Capacity(format!(
                        "could not draw {samples_per_label} distinct prescriptions for {label:?}"
                    )));
                }
            };
            out.push(record);
        }
    }
    Ok(out)
}

fn sample_prescription(rng: &mut ChaCha8Rng, drug: &str) -> Result<AnnotatedRecord> {
    let g = &GAZETTEERS;
    let pick = |rng: &mut ChaCha8Rng, xs: &'static [&'static str]| *xs.choose(rng).unwrap();
    let strength = pick(rng, g.strengths);
    let form = pick(rng, g.forms);
    let quantity = pick(rng, g.quantities);
    let route = pick(rng, g.routes);
    let frequency = pick(rng, g.frequencies);
    let as_needed = rng.random_bool(0.4).then(|| pick(rng, g.as_needed));

    let mut text = String::new();
    let mut spans = Vec::with_capacity(6);
    let mut push = |text: &mut String, piece: &str, entity: Option<Entity>| {
        if !text.is_empty() {
            text.push(' ');
        }
        let start = text.len();
        text.push_str(piece);
        if let Some(entity) = entity {
            spans.push(Span {
                start,
                end: text.len(),
                entity,
            });
        }
    };
    push(&mut text, drug, Some(Entity::Drug));
    push(&mut text, strength, Some(Entity::Strength));
    push(&mut text, form, Some(Entity::Form));
    push(&mut text, "Sig:", None);
    push(&mut text, quantity, None);
    push(&mut text, form, Some(Entity::Form));
    push(&mut text, route, Some(Entity::Route));
    push(&mut text, frequency, Some(Entity::Frequency));
    if let Some(clause) = as_needed {
        push(&mut text, clause, None);
    }
    AnnotatedRecord::new(Record::new(drug, &text)?, spans)
}

/// Recovers entity spans in free text by token-aligned gazetteer lookup.
///
/// The drug span is the first case-insensitive occurrence of `label`; other
/// entities use longest match over the gazetteers. Returns `None` when the
/// label does not occur or the result violates the annotation invariants.
pub fn annotate_with_gazetteers(label: &str, text: &str) -> Option<AnnotatedRecord> {
    let record = Record::new(label, text).ok()?;
    let tokens = token_offsets(&record.instruction);
    let words: Vec<&str> = tokens
        .iter()
        .map(|&(s, e)| &record.instruction[s..e])
        .collect();
    let label_words: Vec<String> = record
        .label
        .split_whitespace()
        .map(str::to_lowercase)
        .collect();

    let mut spans = Vec::new();
    let mut drug_found = false;
    let mut i = 0;
    while i < words.len() {
        if !drug_found && matches_at(&words, i, &label_words, true) {
            let end = i + label_words.len();
            spans.push(Span {
                start: tokens[i].0,
                end: tokens[end - 1].1,
                entity: Entity::Drug,
            });
            drug_found = true;
            i = end;
            continue;
        }
        let best = [
            Entity::Strength,
            Entity::Form,
            Entity::Route,
            Entity::Frequency,
        ]
        .into_iter()
        .flat_map(|entity| {
            GAZETTEERS
                .entries(entity)
                .iter()
                .map(move |entry| (entity, entry))
        })
        .filter_map(|(entity, entry)| {
            let entry_words: Vec<String> = entry.split_whitespace().map(String::from).collect();
            matches_at(&words, i, &entry_words, false).then_some((entity, entry_words.len()))
        })
        .max_by_key(|&(_, len)| len);
        match best {
            Some((entity, len)) => {
                spans.push(Span {
                    start: tokens[i].0,
                    end: tokens[i + len - 1].1,
                    entity,
                });
                i += len;
            }
            None => i += 1,
        }
    }
    AnnotatedRecord::new(record, spans).ok()
}

fn matches_at(words: &[&str], at: usize, pattern: &[String], fold_case: bool) -> bool {
    if pattern.is_empty() || at + pattern.len() > words.len() {
        return false;
    }
    words[at..at + pattern.len()]
        .iter()
        .zip(pattern)
        .all(|(w, p)| {
            if fold_case {
                w.to_lowercase() == *p
            } else {
                w == p
            }
        })
}

/// Byte ranges of whitespace-separated tokens.
pub(crate) fn token_offsets(text: &str) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    let mut start = None;
    for (i, c) in text.char_indices() {
        match (c.is_whitespace(), start) {
            (true, Some(s)) => {
                out.push((s, i));
                start = None;
            }
            (false, None) => start = Some(i),
            _ => {}
        }
    }
    if let Some(s) = start {
        out.push((s, text.len()));
    }
    out
}
