//! Scorer files.
//!
//! ```text
//! magic    8 bytes  "LGSCORER"
//! version  u32 LE
//! kind     u8       1 = ngram, 2 = transformer
//! config   u32 LE length + JSON
//! payload  u64 LE length + bytes
//! ```
//!
//! The n-gram payload is JSON count tables. The transformer payload is a u32
//! tensor count followed by, per tensor, u32 rows, u32 cols and row-major
//! little-endian `f64` data.

use std::fs;
use std::path::Path;

use ndarray::Array2;

use super::ngram::{NgramConfig, NgramPayload};
use super::transformer::Header;
use super::{NgramScorer, ScorerHandle, ScorerKind, TransformerScorer};
use crate::{Error, Result};

const MAGIC: &[u8; 8] = b"LGSCORER";
const VERSION: u32 = 1;

fn kind_tag(kind: ScorerKind) -> u8 {
    match kind {
        ScorerKind::Ngram => 1,
        ScorerKind::Transformer => 2,
    }
}

pub fn save_scorer(scorer: &ScorerHandle, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, to_bytes(scorer)).map_err(|e| Error::io(path, e))
}

pub fn load_scorer(path: impl AsRef<Path>) -> Result<ScorerHandle> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    from_bytes(&bytes)
}

impl NgramScorer {
    /// Loads a scorer file that must hold an n-gram model.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        match load_scorer(path)? {
            ScorerHandle::Ngram(s) => Ok(s),
            other => Err(Error::KindMismatch {
                expected: "ngram",
                found: other.kind().name(),
            }),
        }
    }
}

impl TransformerScorer {
    /// Loads a scorer file that must hold a transformer.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        match load_scorer(path)? {
            ScorerHandle::Transformer(s) => Ok(s),
            other => Err(Error::KindMismatch {
                expected: "transformer",
                found: other.kind().name(),
            }),
        }
    }
}

pub(crate) fn to_bytes(scorer: &ScorerHandle) -> Vec<u8> {
    let (config, payload) = match scorer {
        ScorerHandle::Ngram(s) => (
            serde_json::to_vec(s.config()).expect("config serializes"),
            serde_json::to_vec(&s.to_payload()).expect("counts serialize"),
        ),
        ScorerHandle::Transformer(s) => (
            serde_json::to_vec(&s.header()).expect("config serializes"),
            tensors_to_bytes(s.parameters()),
        ),
    };
    let mut out = Vec::with_capacity(25 + config.len() + payload.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.push(kind_tag(scorer.kind()));
    out.extend_from_slice(&(config.len() as u32).to_le_bytes());
    out.extend_from_slice(&config);
    out.extend_from_slice(&(payload.len() as u64).to_le_bytes());
    out.extend_from_slice(&payload);
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.bytes.len() < n {
            return Err(Error::Format(format!("truncated file while reading {what}")));
        }
        let (head, rest) = self.bytes.split_at(n);
        self.bytes = rest;
        Ok(head)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }
}

pub(crate) fn from_bytes(bytes: &[u8]) -> Result<ScorerHandle> {
    let mut r = Reader { bytes };
    if r.take(8, "magic")? != MAGIC {
        return Err(Error::Format("not a scorer file".into()));
    }
    let version = r.u32("version")?;
    if version != VERSION {
        return Err(Error::Format(format!(
            "unsupported version {version}, expected {VERSION}"
        )));
    }
    let kind = r.take(1, "kind")?[0];
    let config_len = r.u32("config length")? as usize;
    let config = r.take(config_len, "config")?;
    let payload_len = usize::try_from(r.u64("payload length")?)
        .map_err(|_| Error::Format("payload length overflows".into()))?;
    let payload = r.take(payload_len, "payload")?;
    if !r.bytes.is_empty() {
        return Err(Error::Format("trailing bytes after payload".into()));
    }
    let json_err = |e: serde_json::Error| Error::Format(e.to_string());
    match kind {
        1 => {
            let config: NgramConfig = serde_json::from_slice(config).map_err(json_err)?;
            let payload: NgramPayload = serde_json::from_slice(payload).map_err(json_err)?;
            Ok(ScorerHandle::Ngram(NgramScorer::from_payload(config, payload)?))
        }
        2 => {
            let header: Header = serde_json::from_slice(config).map_err(json_err)?;
            let params = tensors_from_bytes(payload)?;
            Ok(ScorerHandle::Transformer(TransformerScorer::from_parts(
                header.config,
                header.vocab_size,
                params,
                header.trained,
            )?))
        }
        other => Err(Error::Format(format!("unknown scorer kind {other}"))),
    }
}

fn tensors_to_bytes(tensors: &[Array2<f64>]) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
    for t in tensors {
        out.extend_from_slice(&(t.nrows() as u32).to_le_bytes());
        out.extend_from_slice(&(t.ncols() as u32).to_le_bytes());
        for x in t.iter() {
            out.extend_from_slice(&x.to_le_bytes());
        }
    }
    out
}

fn tensors_from_bytes(bytes: &[u8]) -> Result<Vec<Array2<f64>>> {
    let mut r = Reader { bytes };
    let count = r.u32("tensor count")?;
    let mut tensors = Vec::new();
    for _ in 0..count {
        let rows = r.u32("tensor rows")? as usize;
        let cols = r.u32("tensor cols")? as usize;
        let len = rows
            .checked_mul(cols)
            .and_then(|n| n.checked_mul(8))
            .ok_or_else(|| Error::Format("tensor size overflows".into()))?;
        let data = r
            .take(len, "tensor data")?
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        tensors.push(Array2::from_shape_vec((rows, cols), data).expect("length checked"));
    }
    if !r.bytes.is_empty() {
        return Err(Error::Format("trailing bytes after tensors".into()));
    }
    Ok(tensors)
}
