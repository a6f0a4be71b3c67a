use std::io::Write;

use serde::{Deserialize, Serialize};

use super::SearchStats;
use crate::{Error, Result};

/// One line of a generations file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRecord {
    pub label: String,
    pub text: String,
    pub log_joint: f64,
    pub heuristic: f64,
    pub rank: usize,
}

/// Search statistics as written to disk. Counts add across searches.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StatsRecord {
    pub vertices_explored: usize,
    pub dead_ends: usize,
    pub backtracks: usize,
    pub wall_time_ms: f64,
}

impl From<&SearchStats> for StatsRecord {
    fn from(s: &SearchStats) -> Self {
        StatsRecord {
            vertices_explored: s.vertices_explored,
            dead_ends: s.dead_ends,
            backtracks: s.backtracks,
            wall_time_ms: s.wall_time.as_secs_f64() * 1e3,
        }
    }
}

impl StatsRecord {
    pub fn add(&mut self, other: &StatsRecord) {
        self.vertices_explored += other.vertices_explored;
        self.dead_ends += other.dead_ends;
        self.backtracks += other.backtracks;
        self.wall_time_ms += other.wall_time_ms;
    }
}

pub fn write_generations(mut writer: impl Write, records: &[GenerationRecord]) -> Result<()> {
    for record in records {
        let line = serde_json::to_string(record).expect("record serializes");
        writeln!(writer, "{line}").map_err(|e| Error::io("<writer>", e))?;
    }
    Ok(())
}

pub fn write_stats(mut writer: impl Write, stats: &StatsRecord) -> Result<()> {
    let json = serde_json::to_string_pretty(stats).expect("stats serialize");
    writeln!(writer, "{json}").map_err(|e| Error::io("<writer>", e))
}
