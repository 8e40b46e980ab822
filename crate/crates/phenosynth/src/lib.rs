//! `phenosynth` builds computable phenotypes (CPs) with LLM assistance and
//! evaluates them with a fixed cross-validation protocol.
//!
//! A CP here is a small program in a sandboxed expression language that maps a
//! patient's feature row to a probability in `[0, 1]`. The crate covers the
//! whole pipeline:
//!
//! - [`cohort`]: synthetic EHR-style cohorts with rule-based labels,
//!   preprocessing, and stratified splits.
//! - [`dsl`]: the phenotype expression language (parser, interpreter, size
//!   metric, parameter slots, renderer).
//! - [`llm`]: a chat-completions client, a deterministic scripted stand-in,
//!   and program extraction from responses.
//! - [`prompt`]: assembly of the synthesis, debug, and feedback prompts.
//! - [`sedi`]: the synthesize-execute-debug-instruct refinement loop.
//! - [`eval`]: AUPRC/AUROC, k-fold CV, bootstrap intervals, subgroup tables,
//!   and rank-based significance tests.
//! - [`tuner`]: gradient-free tuning of a program's numeric constants.
//! - [`experiment`]: the config-driven grid runner and report writer.

pub mod cohort;
pub mod dsl;
pub mod eval;
pub mod experiment;
pub mod llm;
pub mod prompt;
pub mod sedi;
pub mod tuner;

mod rng;

pub use rng::mix_seed;
