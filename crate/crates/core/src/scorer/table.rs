use std::collections::HashMap;

use super::{Distribution, Scorer};
use crate::{Error, Result, TokenId};

/// A scorer defined by an explicit table from prefixes to next-token
/// probabilities. The label is ignored.
///
/// Tokens missing from a row get probability zero, which the decoders mask
/// out.
#[derive(Debug, Clone, Default)]
pub struct TableScorer {
    vocab_size: usize,
    rows: HashMap<Vec<TokenId>, Vec<f64>>,
}

impl TableScorer {
    pub fn new(vocab_size: usize) -> Self {
        TableScorer {
            vocab_size,
            rows: HashMap::new(),
        }
    }

    /// Sets the distribution following `prefix`.
    pub fn insert(&mut self, prefix: Vec<TokenId>, entries: &[(TokenId, f64)]) -> Result<()> {
        let mut probs = vec![0.0; self.vocab_size];
        for &(token, p) in entries {
            let slot = probs.get_mut(token.index()).ok_or(Error::TokenRange {
                id: token.0,
                size: self.vocab_size,
            })?;
            *slot += p;
        }
        Distribution::new(probs.clone())?;
        self.rows.insert(prefix, probs);
        Ok(())
    }

    pub fn with(mut self, prefix: &[TokenId], entries: &[(TokenId, f64)]) -> Result<Self> {
        self.insert(prefix.to_vec(), entries)?;
        Ok(self)
    }
}

impl Scorer for TableScorer {
    fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    fn next_distribution(&self, _label: &[TokenId], prefix: &[TokenId]) -> Result<Distribution> {
        let probs = self
            .rows
            .get(prefix)
            .ok_or_else(|| Error::Input(format!("no table row for prefix {prefix:?}")))?;
        Distribution::new(probs.clone())
    }
}
