//! Training-free hallucination detection from LLM logit traces.
//!
//! The softmax head of a language model is read as an energy-based model:
//! the chosen token's logit and the log-sum-exp over the vocabulary are two
//! energy readouts of the same prefix taken at consecutive decode steps. Their
//! mismatch, the *spilled energy*, is pooled over the exact-answer tokens to
//! score each generation.
//!
//! Pipeline: [`trace`] (capture format) → [`energy`] (per-token energies) →
//! [`answer`] (answer span) → [`detection`] (pooling) → [`eval`] (AuROC
//! reports). [`arith`] generates a controlled addition benchmark.

pub mod answer;
pub mod arith;
pub mod detection;
pub mod energy;
pub mod eval;
pub mod exclusion;
pub mod records;
pub mod trace;

pub use exclusion::ExclusionReason;
