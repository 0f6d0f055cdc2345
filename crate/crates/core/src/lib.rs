//! Instrumented GPT-2 inference for locating and mitigating the tendency of
//! small language models to answer "A" on multiple-choice prompts.
//!
//! The crate is organised as a pipeline:
//!
//! * [`tokenizer`]: byte-level BPE over the GPT-2 vocabulary.
//! * [`model`]: forward pass that records residual, per-head and per-MLP-dimension
//!   contributions and accepts value-vector and attention-swap hooks.
//! * [`lens`]: logit-lens projections of those contributions.
//! * [`discovery`]: layer, head and value-vector scans and the bias circuit.
//! * [`mitigation`]: value-vector edits and attention recalibration plans.
//! * [`datasets`]: prompt rendering, synthetic task generators, ingestion, splits.
//! * [`eval`]: anchored rate, accuracy under interventions, damage and few-shot checks.
//! * [`toyforge`]: tiny transformers with planted bias, used as test oracles.

pub mod datasets;
pub mod discovery;
pub mod error;
pub mod eval;
pub mod lens;
pub mod letter;
pub mod mitigation;
pub mod model;
pub mod par;
pub mod tokenizer;
pub mod toyforge;

pub use error::{Error, Result};
pub use letter::{Letter, LetterSet, TokenText};
pub use par::Execution;
