//! Label-conditioned text generation.
//!
//! The crate is organised around a small pipeline: records of `(label,
//! instruction)` pairs are tokenized into word pieces, an autoregressive
//! [`Scorer`](scorer::Scorer) learns `P(next token | label, prefix)`, and a
//! decoder turns a label into one or more instructions. Two decoders are
//! provided: the classic fixed-width beam search ([`decode::greedy_bsd`]) and a
//! best-first backtracking beam search ([`decode::b2sd`]) that keeps a ranked
//! frontier of partial hypotheses and always expands the most promising one.
//!
//! Around the core sit the evaluation pieces: lexical metrics
//! ([`metrics`]), a synthetic prescription corpus with gold entity spans
//! ([`corpus`]) and an averaged-perceptron BIO tagger ([`tagger`]) used for the
//! downstream entity recognition experiment.

pub mod corpus;
pub mod decode;
mod error;
pub mod metrics;
pub mod scorer;
pub mod tagger;
pub mod tokenizer;

pub use error::{Error, Result};
pub use tokenizer::{TokenId, Vocabulary};
