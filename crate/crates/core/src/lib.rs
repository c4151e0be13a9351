//! Neuron-concept attribution engine.
//!
//! Pipeline: load feature and saliency maps ([`tensor_store`]), extract
//! concept-responsible regions ([`region`]), train per-concept classifiers
//! ([`classifier`]), score neurons with Monte-Carlo Shapley values
//! ([`shapley`]), and turn the score matrix into associations
//! ([`association`]) and localization checks ([`localization`]).

pub mod association;
pub mod classifier;
pub mod error;
pub mod hierarchy;
pub mod localization;
pub mod pipeline;
pub mod region;
pub mod seed;
pub mod shapley;
pub mod synth;
pub mod tensor_store;

pub use error::{Error, Result};
