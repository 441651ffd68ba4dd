//! Semantic distortion measurement for sequential tool-call pipelines.
//!
//! The crate is organised around the life of a single chain:
//!
//! - [`text`] tokenizes, tags and chunks text into noun-phrase facts.
//! - [`metric`] turns two texts into a hybrid distortion value.
//! - [`embeddings`] supplies unit-norm vectors for the semantic half of the metric.
//! - [`mcp`] is the JSON-RPC tool layer the simulated agent talks to.
//! - [`chain`] simulates adaptive query chains and records traces.
//! - [`bounds`] holds the closed-form concentration quantities and envelopes.
//! - [`diagnostics`] estimates dependence from traces and checks assumptions.
//! - [`experiments`] runs whole experiment tracks and writes artifacts.

#![forbid(unsafe_code)]

pub mod bounds;
pub mod chain;
pub mod diagnostics;
pub mod embeddings;
pub mod experiments;
pub mod mcp;
pub mod metric;
pub mod text;

pub use bounds::{DependencyParams, Envelope};
pub use chain::{ChainConfig, ChainTrace};
pub use embeddings::{Embedder, EmbeddingVector, HashedEmbedder};
pub use metric::{DistortionBreakdown, FactSet};

/// Absolute tolerance used for metric identities.
pub const METRIC_TOLERANCE: f64 = 1e-9;
