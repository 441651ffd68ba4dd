//! Unit-norm text embeddings behind a pluggable provider contract.
//!
//! [`HashedEmbedder`] is the bundled provider: a pure function of the token
//! multiset. [`ExternalEmbedder`] talks to an HTTP embedding service.
//! Blank text maps to an explicit zero sentinel whose distance to anything is
//! pinned to 1.

mod external;
mod sidecar;

use std::collections::HashMap;
use std::sync::RwLock;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::metric::FactSet;
use crate::text;

pub use external::{external_embed_batch, ExternalEmbedder};
pub use sidecar::{read_matrix, write_matrix, EmbeddingMatrix};

/// Default dimension of the bundled provider.
pub const DEFAULT_DIM: usize = 256;
/// Hash seed of the bundled provider ("MCP").
pub const DEFAULT_SEED: u64 = 0x4D4350;
/// Tolerance for the unit-norm invariant.
pub const NORM_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum EmbedError {
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("embedding request timed out: {0}")]
    Timeout(String),
    #[error("transport failure: {0}")]
    Transport(String),
    #[error("embedding service returned status {0}")]
    Status(u16),
    #[error("malformed embedding payload: {0}")]
    Parse(String),
    #[error("expected {expected} embeddings, got {actual}")]
    CountMismatch { expected: usize, actual: usize },
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("sidecar i/o: {0}")]
    Io(#[from] std::io::Error),
}

/// An L2-normalized embedding, or the zero sentinel used for blank text.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingVector {
    components: Vec<f64>,
}

impl EmbeddingVector {
    pub fn zero_sentinel(dim: usize) -> Self {
        Self {
            components: vec![0.0; dim],
        }
    }

    /// Normalizes `raw` to unit length. An all-zero input yields the sentinel.
    pub fn normalized(mut raw: Vec<f64>) -> Self {
        let norm = l2(&raw);
        if norm > 0.0 && norm.is_finite() {
            for x in &mut raw {
                *x /= norm;
            }
        } else {
            raw.iter_mut().for_each(|x| *x = 0.0);
        }
        Self { components: raw }
    }

    pub fn dim(&self) -> usize {
        self.components.len()
    }

    pub fn is_sentinel(&self) -> bool {
        self.components.iter().all(|&x| x == 0.0)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.components
    }

    pub fn norm(&self) -> f64 {
        l2(&self.components)
    }

    pub fn is_unit(&self) -> bool {
        (self.norm() - 1.0).abs() <= NORM_TOLERANCE
    }
}

fn l2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Identity and shape of an embedding provider.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProviderDescriptor {
    pub name: String,
    pub dim: usize,
    pub deterministic: bool,
}

/// A text embedding provider. Implementations must be safe to call from
/// several threads at once.
pub trait Embedder: Send + Sync {
    fn descriptor(&self) -> ProviderDescriptor;

    fn embed(&self, text: &str) -> Result<EmbeddingVector, EmbedError>;

    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<EmbeddingVector>, EmbedError> {
        texts.iter().map(|t| self.embed(t)).collect()
    }
}

impl<E: Embedder + ?Sized> Embedder for std::sync::Arc<E> {
    fn descriptor(&self) -> ProviderDescriptor {
        (**self).descriptor()
    }
    fn embed(&self, text: &str) -> Result<EmbeddingVector, EmbedError> {
        (**self).embed(text)
    }
    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<EmbeddingVector>, EmbedError> {
        (**self).embed_batch(texts)
    }
}

/// Hashed bag-of-tokens embedder.
///
/// Each token is hashed with seeded 64-bit FNV-1a followed by a SplitMix64
/// finalizer, counted into `dim` buckets, and the count vector is
/// L2-normalized.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HashedEmbedder {
    dim: usize,
    seed: u64,
}

impl Default for HashedEmbedder {
    fn default() -> Self {
        Self {
            dim: DEFAULT_DIM,
            seed: DEFAULT_SEED,
        }
    }
}

impl HashedEmbedder {
    pub fn new(dim: usize, seed: u64) -> Result<Self, EmbedError> {
        if dim < 2 {
            return Err(EmbedError::InvalidRequest(format!("dim must be >= 2, got {dim}")));
        }
        Ok(Self { dim, seed })
    }

    pub fn bucket(&self, token: &str) -> usize {
        (token_hash(token.as_bytes(), self.seed) % self.dim as u64) as usize
    }
}

pub(crate) fn token_hash(bytes: &[u8], seed: u64) -> u64 {
    const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const PRIME: u64 = 0x0000_0100_0000_01b3;
    let mut h = OFFSET ^ seed;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(PRIME);
    }
    splitmix64(h)
}

/// SplitMix64 finalizer.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

impl Embedder for HashedEmbedder {
    fn descriptor(&self) -> ProviderDescriptor {
        ProviderDescriptor {
            name: "hashed-bag-of-tokens".to_string(),
            dim: self.dim,
            deterministic: true,
        }
    }

    fn embed(&self, text: &str) -> Result<EmbeddingVector, EmbedError> {
        let mut counts = vec![0.0; self.dim];
        for word in text::words(text) {
            counts[self.bucket(&word)] += 1.0;
        }
        Ok(EmbeddingVector::normalized(counts))
    }
}

/// In-memory memoization of another provider.
pub struct CachedEmbedder<E> {
    inner: E,
    cache: RwLock<HashMap<String, EmbeddingVector>>,
}

impl<E: Embedder> CachedEmbedder<E> {
    pub fn new(inner: E) -> Self {
        Self {
            inner,
            cache: RwLock::new(HashMap::new()),
        }
    }

    pub fn len(&self) -> usize {
        self.cache.read().map(|c| c.len()).unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn inner(&self) -> &E {
        &self.inner
    }
}

impl<E: Embedder> Embedder for CachedEmbedder<E> {
    fn descriptor(&self) -> ProviderDescriptor {
        self.inner.descriptor()
    }

    fn embed(&self, text: &str) -> Result<EmbeddingVector, EmbedError> {
        if let Some(v) = self.cache.read().ok().and_then(|c| c.get(text).cloned()) {
            return Ok(v);
        }
        let v = self.inner.embed(text)?;
        if let Ok(mut cache) = self.cache.write() {
            cache.entry(text.to_string()).or_insert_with(|| v.clone());
        }
        Ok(v)
    }
}

/// Cosine similarity; 0 when either side is the sentinel.
pub fn cosine(a: &EmbeddingVector, b: &EmbeddingVector) -> Result<f64, EmbedError> {
    if a.dim() != b.dim() {
        return Err(EmbedError::DimensionMismatch {
            left: a.dim(),
            right: b.dim(),
        });
    }
    let (na, nb) = (a.norm(), b.norm());
    if na == 0.0 || nb == 0.0 {
        return Ok(0.0);
    }
    let dot: f64 = a.components.iter().zip(&b.components).map(|(x, y)| x * y).sum();
    Ok((dot / (na * nb)).clamp(-1.0, 1.0))
}

/// `(1 - cos(a, b)) / 2`, or 1 if either input is the sentinel.
pub fn embedding_distance(a: &EmbeddingVector, b: &EmbeddingVector) -> Result<f64, EmbedError> {
    let c = cosine(a, b)?;
    if a.is_sentinel() || b.is_sentinel() {
        return Ok(1.0);
    }
    Ok(((1.0 - c) / 2.0).clamp(0.0, 1.0))
}

/// How per-fact embeddings are pooled into one vector.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FactPooling {
    /// Weight each fact embedding by its fact weight.
    #[default]
    Weighted,
    /// Plain mean over facts.
    Uniform,
}

/// Pools per-fact embeddings and renormalizes. An empty set, or a set whose
/// pooled vector vanishes, yields the sentinel.
pub fn embed_fact_set(
    facts: &FactSet,
    embedder: &dyn Embedder,
    pooling: FactPooling,
) -> Result<EmbeddingVector, EmbedError> {
    let dim = embedder.descriptor().dim;
    let mut acc = vec![0.0; dim];
    for fact in facts.iter() {
        let v = embedder.embed(&fact.surface)?;
        if v.dim() != dim {
            return Err(EmbedError::DimensionMismatch {
                left: dim,
                right: v.dim(),
            });
        }
        let w = match pooling {
            FactPooling::Weighted => fact.weight,
            FactPooling::Uniform => 1.0,
        };
        for (a, x) in acc.iter_mut().zip(v.as_slice()) {
            *a += w * x;
        }
    }
    Ok(EmbeddingVector::normalized(acc))
}
