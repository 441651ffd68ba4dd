//! Hybrid semantic distortion between a reference text and an observed text.
//!
//! The distortion is a convex combination of a weighted Jaccard distance over
//! extracted noun-phrase facts and a normalized cosine distance between text
//! embeddings:
//!
//! ```text
//! d_sem = (1 - lambda) * d_set + lambda * d_emb
//! ```

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embeddings::{embedding_distance, EmbedError, Embedder};
use crate::text;

#[derive(Debug, Error)]
pub enum MetricError {
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("embedding provider failed on text {index}: {source}")]
    Provider {
        index: usize,
        #[source]
        source: EmbedError,
    },
}

/// A weighted noun-phrase fact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fact {
    /// Space-joined normalized tokens.
    pub surface: String,
    pub weight: f64,
}

impl Fact {
    pub fn tokens(&self) -> impl Iterator<Item = &str> {
        self.surface.split(' ')
    }
}

/// A set of facts keyed by surface.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FactSet {
    facts: BTreeMap<String, f64>,
    normalized: bool,
}

impl FactSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Builds a set from `(surface, weight)` pairs. Later duplicates
    /// overwrite earlier ones.
    pub fn from_weights<I, S>(pairs: I) -> Result<Self, MetricError>
    where
        I: IntoIterator<Item = (S, f64)>,
        S: Into<String>,
    {
        let mut facts = BTreeMap::new();
        for (surface, weight) in pairs {
            let surface = surface.into();
            if !weight.is_finite() || weight < 0.0 {
                return Err(MetricError::Contract(format!(
                    "fact {surface:?} has invalid weight {weight}"
                )));
            }
            facts.insert(surface, weight);
        }
        Ok(Self {
            facts,
            normalized: false,
        })
    }

    /// Scales weights to sum to one. A set with zero total weight is left
    /// unchanged and stays unnormalized.
    pub fn normalize(&mut self) {
        let total: f64 = self.facts.values().sum();
        if total > 0.0 {
            for w in self.facts.values_mut() {
                *w /= total;
            }
            self.normalized = true;
        }
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn len(&self) -> usize {
        self.facts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.facts.is_empty()
    }

    pub fn weight(&self, surface: &str) -> Option<f64> {
        self.facts.get(surface).copied()
    }

    pub fn contains(&self, surface: &str) -> bool {
        self.facts.contains_key(surface)
    }

    pub fn total_weight(&self) -> f64 {
        self.facts.values().sum()
    }

    /// Facts in lexicographic surface order.
    pub fn iter(&self) -> impl Iterator<Item = Fact> + '_ {
        self.facts.iter().map(|(s, &w)| Fact {
            surface: s.clone(),
            weight: w,
        })
    }

    pub fn surfaces(&self) -> impl Iterator<Item = &str> {
        self.facts.keys().map(String::as_str)
    }

    /// True when both sets hold the same surfaces with weights equal within
    /// `tol`.
    pub fn approx_eq(&self, other: &FactSet, tol: f64) -> bool {
        self.facts.len() == other.facts.len()
            && self
                .facts
                .iter()
                .all(|(s, w)| other.weight(s).is_some_and(|v| (v - w).abs() <= tol))
    }
}

/// Extracts noun-phrase facts from `text`.
///
/// Chunks shorter than two tokens are dropped. Each remaining surface is
/// weighted by its count of non-overlapping occurrences in the text, and the
/// weights are normalized to sum to one.
pub fn extract_facts(text: &str) -> FactSet {
    let segments = text::word_segments(text);
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    for chunk in text::noun_phrases(text) {
        if chunk.len() < 2 {
            continue;
        }
        let surface = chunk.join(" ");
        if counts.contains_key(&surface) {
            continue;
        }
        let n = text::count_occurrences(&segments, &chunk).max(1);
        counts.insert(surface, n);
    }
    let mut set = FactSet {
        facts: counts.into_iter().map(|(s, n)| (s, n as f64)).collect(),
        normalized: false,
    };
    set.normalize();
    set
}

/// Weighted Jaccard distance between two fact sets.
///
/// Both empty gives 0, exactly one empty gives 1, and a zero union weight
/// with both sets nonempty gives 0.
pub fn weighted_jaccard(reference: &FactSet, observed: &FactSet) -> f64 {
    match (reference.is_empty(), observed.is_empty()) {
        (true, true) => return 0.0,
        (true, false) | (false, true) => return 1.0,
        _ => {}
    }
    let mut intersection = 0.0;
    let mut union = 0.0;
    for (surface, &w_ref) in &reference.facts {
        match observed.facts.get(surface) {
            Some(&w_obs) => {
                intersection += w_ref.min(w_obs);
                union += w_ref.max(w_obs);
            }
            None => union += w_ref,
        }
    }
    for (surface, &w_obs) in &observed.facts {
        if !reference.facts.contains_key(surface) {
            union += w_obs;
        }
    }
    if union == 0.0 {
        return 0.0;
    }
    (1.0 - intersection / union).clamp(0.0, 1.0)
}

/// Per-step distortion with both components and the mixing weight.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistortionBreakdown {
    pub d_set: f64,
    pub d_emb: f64,
    pub lambda: f64,
    pub d_sem: f64,
}

impl DistortionBreakdown {
    /// Combines the two components. Inputs are assumed to lie in `[0, 1]`.
    pub fn combine(d_set: f64, d_emb: f64, lambda: f64) -> Self {
        let d_sem = ((1.0 - lambda) * d_set + lambda * d_emb).clamp(0.0, 1.0);
        Self {
            d_set,
            d_emb,
            lambda,
            d_sem,
        }
    }

    pub fn zero(lambda: f64) -> Self {
        Self::combine(0.0, 0.0, lambda)
    }
}

fn check_unit(name: &str, v: f64) -> Result<(), MetricError> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(MetricError::Contract(format!("{name} = {v} is outside [0, 1]")))
    }
}

/// Embedding distance between two texts; 1 if either text is blank.
pub fn text_embedding_distance(reference: &str, observed: &str, embedder: &dyn Embedder) -> Result<f64, MetricError> {
    if reference.trim().is_empty() || observed.trim().is_empty() {
        return Ok(1.0);
    }
    let a = embedder
        .embed(reference)
        .map_err(|source| MetricError::Provider { index: 0, source })?;
    let b = embedder
        .embed(observed)
        .map_err(|source| MetricError::Provider { index: 1, source })?;
    let d = embedding_distance(&a, &b).map_err(|source| MetricError::Provider { index: 1, source })?;
    Ok(d.clamp(0.0, 1.0))
}

/// Hybrid semantic distortion of `observed` against `reference`.
pub fn hybrid_distortion(
    reference: &str,
    observed: &str,
    lambda: f64,
    embedder: &dyn Embedder,
) -> Result<DistortionBreakdown, MetricError> {
    check_unit("lambda", lambda)?;
    let d_set = weighted_jaccard(&extract_facts(reference), &extract_facts(observed));
    let d_emb = text_embedding_distance(reference, observed, embedder)?;
    Ok(DistortionBreakdown::combine(d_set, d_emb, lambda))
}

/// Running sums of per-step distortions.
pub fn cumulative_distortion(deltas: &[f64]) -> Result<Vec<f64>, MetricError> {
    let mut total = 0.0;
    deltas
        .iter()
        .enumerate()
        .map(|(i, &d)| {
            check_unit(&format!("delta[{i}]"), d)?;
            total += d;
            Ok(total)
        })
        .collect()
}
