//! Persona and knowledge grounding for dialogue via normalized token-level
//! late interaction.
//!
//! Candidate persona and knowledge entries are embedded once per token,
//! projected to a quarter of the model width, and scored against each other
//! and against the utterance history with a length-normalized MaxSim kernel
//! ([`ncli::ncolbert`]). Two tiny heads turn those similarities into a
//! multi-label persona selection (sigmoid, threshold 0.5) and a single
//! knowledge selection (softmax, argmax).
//!
//! Module map:
//!
//! - [`dataset`]: JSONL corpus loading, statistics and a synthetic corpus generator.
//! - [`embedstore`]: tokenizer, embedding providers, projection, binary format and cache.
//! - [`ncli`]: the similarity kernel and pairwise similarity matrices.
//! - [`grounding`]: heads, losses, analytic gradients, training and LM input assembly.
//! - [`metrics`]: perplexity, ROUGE, BLEU, token F1 and grounding accuracies.
//! - [`cli`]: the subcommand implementations behind the `ncli-ground` binary.

pub mod cli;
pub mod dataset;
pub mod embedstore;
pub mod error;
pub mod grounding;
pub mod metrics;
pub mod ncli;

pub use error::{Error, Result};
