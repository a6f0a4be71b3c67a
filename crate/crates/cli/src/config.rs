//! Run configuration read from a TOML file. Every field is optional; command
//! line flags take precedence, and anything left unset falls back to presets.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use labelgen::corpus::LengthUnit;
use labelgen::decode::{DecodeConfig, StopRule};
use labelgen::scorer::TransformerConfig;
use serde::Deserialize;

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub corpus: CorpusSection,
    pub tokenizer: TokenizerSection,
    pub scorer: ScorerSection,
    pub transformer: TransformerSection,
    pub decode: DecodeSection,
    pub evaluate: EvaluateSection,
    pub bench: BenchSection,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("invalid config {}", path.display()))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorpusSection {
    pub synthetic: Option<bool>,
    pub input: Option<PathBuf>,
    pub test: Option<PathBuf>,
    pub labels: Option<usize>,
    pub per_label: Option<usize>,
    pub filter_k: Option<f64>,
    pub length_unit: Option<LengthUnit>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TokenizerSection {
    pub vocab_size: Option<usize>,
    pub min_frequency: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScorerSection {
    pub kind: Option<String>,
    pub order: Option<usize>,
    pub weights: Option<Vec<f64>>,
    pub preset: Option<String>,
}

/// Overrides applied on top of a transformer preset.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TransformerSection {
    pub d_model: Option<usize>,
    pub d_ff: Option<usize>,
    pub d_kv: Option<usize>,
    pub heads: Option<usize>,
    pub layers: Option<usize>,
    pub dropout: Option<f64>,
    pub lr: Option<f64>,
    pub weight_decay: Option<f64>,
    pub epochs: Option<usize>,
    pub batch_size: Option<usize>,
    pub max_src_len: Option<usize>,
    pub max_tgt_len: Option<usize>,
}

impl TransformerSection {
    pub fn apply(&self, c: &mut TransformerConfig) {
        macro_rules! set {
            ($($f:ident),*) => { $(if let Some(v) = self.$f { c.$f = v; })* };
        }
        set!(
            d_model,
            d_ff,
            d_kv,
            heads,
            layers,
            dropout,
            lr,
            weight_decay,
            epochs,
            batch_size,
            max_src_len,
            max_tgt_len
        );
    }
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DecodeSection {
    pub algo: Option<String>,
    pub multiplier: Option<usize>,
    pub n: Option<usize>,
    pub m: Option<usize>,
    pub p_b: Option<f64>,
    pub alpha: Option<f64>,
    pub max_len: Option<usize>,
    pub nb_output: Option<usize>,
    pub repeat_window: Option<usize>,
    pub step_budget: Option<usize>,
    pub stop_rule: Option<StopRule>,
}

impl DecodeSection {
    /// Fills unset fields of `self` from `fallback`.
    pub fn or(self, fallback: &DecodeSection) -> DecodeSection {
        let f = fallback.clone();
        DecodeSection {
            algo: self.algo.or(f.algo),
            multiplier: self.multiplier.or(f.multiplier),
            n: self.n.or(f.n),
            m: self.m.or(f.m),
            p_b: self.p_b.or(f.p_b),
            alpha: self.alpha.or(f.alpha),
            max_len: self.max_len.or(f.max_len),
            nb_output: self.nb_output.or(f.nb_output),
            repeat_window: self.repeat_window.or(f.repeat_window),
            step_budget: self.step_budget.or(f.step_budget),
            stop_rule: self.stop_rule.or(f.stop_rule),
        }
    }

    /// Decoder settings for one label that needs `outputs` sequences. `m`
    /// defaults to three times the output count.
    pub fn config_for(&self, outputs: usize) -> DecodeConfig {
        let mut c = DecodeConfig::with_outputs(outputs);
        if let Some(n) = self.n {
            c.n = n;
        }
        if let Some(m) = self.m {
            c.m = m;
        }
        if let Some(p_b) = self.p_b {
            c.p_b = Some(p_b);
        }
        if let Some(alpha) = self.alpha {
            c.alpha = alpha;
        }
        if let Some(max_len) = self.max_len {
            c.max_len = max_len;
        }
        if let Some(w) = self.repeat_window {
            c.repeat_window = w;
        }
        c.step_budget = self.step_budget;
        if let Some(rule) = self.stop_rule {
            c.stop_rule = rule;
        }
        c
    }
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluateSection {
    pub ner: Option<bool>,
    pub steps: Option<Vec<f64>>,
    pub tagger_epochs: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchSection {
    pub multipliers: Option<Vec<usize>>,
    pub checkpoints: Option<Vec<PathBuf>>,
}
