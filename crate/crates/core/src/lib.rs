//! # gardenpath
//!
//! Probe how a GPT-2 style decoder traverses garden-path sentences by comparing
//! its hidden-state trajectories across minimally perturbed sentence variants.
//!
//! The pipeline is:
//!
//! 1. [`corpus`] renders each sentence family into its grammatical forms
//!    (garden path, unambiguous, blocked, each optionally negated or extended),
//!    recording the byte spans of inserted material and of the trigger word.
//! 2. [`tokenizer`] applies byte-level BPE and keeps byte spans per token.
//! 3. [`model`] runs a CPU forward pass that captures every residual-stream
//!    boundary plus LM-head logits, or loads an activation dump produced elsewhere.
//! 4. [`align`] pairs tokens of a sentence with those of its negated form,
//!    leaving out the negating tokens.
//! 5. [`metrics`] computes Manhattan distance, mean-centred cosine similarity
//!    and surprisal difference per paired position.
//! 6. [`analyze`] orchestrates the run and aggregates effects per sentence type.
//! 7. [`report`] writes CSV/JSON tables and SVG trajectory plots.

pub mod align;
pub mod analyze;
pub mod corpus;
pub mod error;
pub mod metrics;
pub mod model;
pub mod report;
pub mod tokenizer;

pub use align::{align, PairMap};
pub use analyze::{
    aggregate, run_pipeline, scalarize, AggregateRecord, Comparison, RunConfig, RunOutput, ScalarMode, TrajectoryRecord,
};
pub use corpus::{enumerate_forms, load_corpus, render, FormSpec, RenderedSentence, SentenceFamily};
pub use error::{Error, Result};
pub use metrics::{CenteringStats, MetricSeries};
pub use model::{ForwardTrace, Model, ModelConfig};
pub use tokenizer::{TokenSequence, Vocabulary};
