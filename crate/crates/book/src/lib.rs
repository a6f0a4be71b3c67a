//! Compiles the guide's Rust snippets as doctests, one module per chapter,
//! so `cargo test` fails when the book drifts from the library.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}
#[doc = include_str!("../../../book/src/tokenizer.md")]
pub mod tokenizer {}
#[doc = include_str!("../../../book/src/scorers.md")]
pub mod scorers {}
#[doc = include_str!("../../../book/src/decoding.md")]
pub mod decoding {}
#[doc = include_str!("../../../book/src/backtracking.md")]
pub mod backtracking {}
#[doc = include_str!("../../../book/src/metrics.md")]
pub mod metrics {}
#[doc = include_str!("../../../book/src/ner.md")]
pub mod ner {}
#[doc = include_str!("../../../book/src/cli.md")]
pub mod cli {}
#[doc = include_str!("../../../README.md")]
pub mod readme {}
