//! Embedding of generalized property graphs.
//!
//! Nodes are embedded by training a CBOW-style encoder on `(node, context)`
//! pairs, where a context is a bag of tokens drawn from the node's neighbors
//! and its own property values. Type labels are never shown to the encoder;
//! the [`eval`] drivers measure how well they can be recovered afterwards.

pub mod cli;
pub mod encoder;
pub mod eval;
pub mod graph;
pub mod sampler;
pub mod vectors;

pub use encoder::{EmbeddingModel, TrainConfig, Vocabulary};
pub use graph::{GeneralizedGraph, GraphBuilder, TypedPath};
pub use sampler::{SamplerConfig, TrainingPair};
