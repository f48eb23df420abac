//! Denotation graphs over captioned images, and a small image-text matching
//! model trained with graph-derived objectives.
//!
//! The pipeline runs in order: [`corpus`] loads tagged captions, lexicons and
//! image features; [`ling`] abstracts each caption into more generic
//! phrases; [`graph`] merges those into a subsumption graph whose nodes carry
//! image sets; [`sampler`] draws positives and four kinds of negatives from
//! the graph; [`model`] scores image-text pairs and computes the matching,
//! specificity and edge-prediction losses with analytic gradients;
//! [`trainer`] runs SGD over all three; [`eval`] computes retrieval metrics.

pub mod corpus;
pub mod error;
pub mod eval;
pub mod graph;
pub mod ling;
pub mod model;
pub mod sampler;
pub mod synth;
pub mod trainer;

pub use corpus::{CaptionRecord, FeatureStore, HypernymLexicon, ImageFeature, TaggedToken};
pub use error::{Error, Result};
pub use graph::{DenotationGraph, GraphStats, Node, NodeId};
pub use ling::{Derivation, Expression, RuleId, RuleSet};
pub use model::{Gradients, LossValue, MatchModel, Vocab};
pub use sampler::{NegativeKind, SimilarityIndex, TrainingBatch};
pub use trainer::TrainConfig;
