//! Sequence-matching receptiveness (SMR) prediction for visual place
//! recognition.
//!
//! Given a single-frame reference-by-query distance matrix, the pipeline
//! sequence-matches it with an identity kernel, extracts four attributes per
//! query from the query's recent history, predicts with a small MLP whether
//! the sequence-matched match will be correct, and uses that prediction to
//! remove (and optionally restore) matches before precision-recall scoring.

pub mod attributes;
pub mod error;
pub mod eval;
pub mod filters;
pub mod labeling;
pub mod matrixio;
pub mod mlp;
pub mod pipeline;
pub mod plot;
pub mod seqmatch;
pub mod synth;

pub use error::{Result, SmrError};
