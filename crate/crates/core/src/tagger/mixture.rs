use std::fmt;
use std::io::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{evaluate_ner, train_tagger, NerScore};
use crate::corpus::{AnnotatedRecord, Entity};
use crate::metrics::csv_field;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Arm {
    /// Real records duplicated up to the step size.
    Real,
    /// Synthetic records only, same total size as the real arm.
    Synthetic,
    /// All real records topped up with synthetic ones.
    Combined,
}

impl Arm {
    pub const ALL: [Arm; 3] = [Arm::Real, Arm::Synthetic, Arm::Combined];

    pub fn name(self) -> &'static str {
        match self {
            Arm::Real => "real",
            Arm::Synthetic => "synthetic",
            Arm::Combined => "combined",
        }
    }
}

impl fmt::Display for Arm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureRow {
    pub arm: Arm,
    pub step: f64,
    pub train_size: usize,
    pub score: NerScore,
}

fn cycle(records: &[AnnotatedRecord], n: usize) -> impl Iterator<Item = &AnnotatedRecord> {
    records.iter().cycle().take(n)
}

/// Training set of `arm` at `step`, measured in multiples of `real.len()`.
pub fn arm_data(
    arm: Arm,
    step: f64,
    real: &[AnnotatedRecord],
    synthetic: &[AnnotatedRecord],
) -> Vec<AnnotatedRecord> {
    let base = real.len() as f64;
    match arm {
        Arm::Real => cycle(real, (step * base).round() as usize).cloned().collect(),
        Arm::Synthetic => cycle(synthetic, (step * base).round() as usize)
            .cloned()
            .collect(),
        Arm::Combined => real
            .iter()
            .chain(cycle(synthetic, ((step - 1.0) * base).round() as usize))
            .cloned()
            .collect(),
    }
}

/// Trains one tagger per arm and step with the same seed and scores each on
/// `test`. Rows are ordered by arm, then by step as given. Runs are
/// independent and execute on scoped threads.
pub fn mixture_experiment(
    real: &[AnnotatedRecord],
    synthetic: &[AnnotatedRecord],
    test: &[AnnotatedRecord],
    steps: &[f64],
    seed: u64,
    epochs: usize,
) -> Result<Vec<MixtureRow>> {
    for (name, set) in [("real", real), ("synthetic", synthetic), ("test", test)] {
        if set.is_empty() {
            return Err(Error::Input(format!("{name} set is empty")));
        }
    }
    if steps.is_empty() {
        return Err(Error::Input("no mixture steps".into()));
    }
    if let Some(bad) = steps.iter().find(|s| !(1.0..=5.0).contains(*s)) {
        return Err(Error::Input(format!("step {bad} outside [1, 5]")));
    }
    // Generators emit records grouped by label; shuffle once so every step
    // draws from all labels. Larger steps extend smaller ones.
    let mut synthetic = synthetic.to_vec();
    synthetic.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let synthetic = &synthetic[..];
    let jobs: Vec<(Arm, f64)> = Arm::ALL
        .iter()
        .flat_map(|&arm| steps.iter().map(move |&step| (arm, step)))
        .collect();
    std::thread::scope(|scope| {
        let handles: Vec<_> = jobs
            .iter()
            .map(|&(arm, step)| {
                scope.spawn(move || -> Result<MixtureRow> {
                    let data = arm_data(arm, step, real, synthetic);
                    let model = train_tagger(&data, epochs, seed)?;
                    log::info!("mixture {arm} x{step}: {} records", data.len());
                    Ok(MixtureRow {
                        arm,
                        step,
                        train_size: data.len(),
                        score: evaluate_ner(&model, test),
                    })
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("mixture worker panicked"))
            .collect()
    })
}

/// Columns `arm,step,entity,precision,recall,f1`: five entity rows per run
/// followed by a `macro` row carrying the macro F1.
pub fn write_mixture_csv(mut writer: impl Write, rows: &[MixtureRow]) -> Result<()> {
    let io = |e| Error::io("<writer>", e);
    writeln!(writer, "arm,step,entity,precision,recall,f1").map_err(io)?;
    for row in rows {
        for entity in Entity::ALL {
            let s = row.score.entity(entity);
            writeln!(
                writer,
                "{},{},{},{:.6},{:.6},{:.6}",
                row.arm,
                row.step,
                csv_field(entity.name()),
                s.precision,
                s.recall,
                s.f1
            )
            .map_err(io)?;
        }
        writeln!(writer, "{},{},macro,,,{:.6}", row.arm, row.step, row.score.macro_f1).map_err(io)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::generate_synthetic_corpus;

    #[test]
    fn arm_sizes() {
        let real = generate_synthetic_corpus(1, 4, 2).unwrap();
        let synthetic = generate_synthetic_corpus(2, 10, 3).unwrap();
        assert_eq!(arm_data(Arm::Real, 1.0, &real, &synthetic), real);
        assert_eq!(arm_data(Arm::Real, 2.5, &real, &synthetic).len(), 20);
        assert_eq!(arm_data(Arm::Synthetic, 5.0, &real, &synthetic).len(), 40);
        let combined = arm_data(Arm::Combined, 3.0, &real, &synthetic);
        assert_eq!(combined.len(), 24);
        assert_eq!(&combined[..8], &real[..]);
        assert_eq!(arm_data(Arm::Combined, 1.0, &real, &synthetic), real);
    }

    #[test]
    fn rejects_bad_steps() {
        let data = generate_synthetic_corpus(1, 2, 2).unwrap();
        assert!(mixture_experiment(&data, &data, &data, &[0.5], 0, 1).is_err());
        assert!(mixture_experiment(&data, &[], &data, &[1.0], 0, 1).is_err());
    }

    #[test]
    fn csv_shape() {
        let data = generate_synthetic_corpus(3, 4, 2).unwrap();
        let rows = mixture_experiment(&data, &data, &data, &[1.0, 2.0], 0, 2).unwrap();
        assert_eq!(rows.len(), 6);
        let mut out = Vec::new();
        write_mixture_csv(&mut out, &rows).unwrap();
        assert_eq!(String::from_utf8(out).unwrap().lines().count(), 1 + 6 * 6);
    }
}
