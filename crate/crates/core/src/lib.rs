//! Word-level coreference resolution.
//!
//! Coreference links are predicted between single words (the syntactic
//! heads of mentions) rather than between spans. A bilinear coarse scorer
//! keeps the `k` best antecedents of every word, a feed-forward scorer
//! refines them, and a separate span predictor recovers each linked
//! head's full mention.
//!
//! Modules:
//! - [`corpus`]: JSON-lines documents, validation, head extraction and the
//!   word-level view of gold clusters.
//! - [`numerics`]: tensors, reverse-mode differentiation, gradient
//!   checking, Adam and binary checkpoints.
//! - [`encoder`]: token representations from a trainable toy encoder or
//!   from precomputed subtoken embeddings (`WLEMB1` files).
//! - [`coref`], [`spans`], [`model`]: antecedent scoring, span
//!   reconstruction and the assembled model.
//! - [`training`]: losses and the optimization loop.
//! - [`metrics`]: MUC, B³, CEAF-φ4, CoNLL F1 and the complexity audit.
//! - [`cli`]: the batch commands of the `wlcoref` binary.

pub mod cli;
pub mod config;
pub mod coref;
pub mod corpus;
pub mod diagnostics;
pub mod encoder;
pub mod error;
mod layers;
pub mod metrics;
pub mod model;
pub mod numerics;
pub mod spans;
pub mod synth;
pub mod training;

pub use config::RunConfig;
pub use corpus::{Document, Span, WordLevelDoc};
pub use error::{Error, Result};
pub use model::{CorefModel, ModelConfig, Prediction};
pub use training::TrainConfig;
