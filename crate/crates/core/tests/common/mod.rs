#![allow(dead_code)]

use std::collections::BTreeSet;
use std::sync::OnceLock;

use mcp_fidelity::chain::corrupt::synonyms;
use mcp_fidelity::embeddings::HashedEmbedder;
use mcp_fidelity::mcp::corpus::{generate_corpus, DEFAULT_CORPUS_SEED};

pub fn corpus() -> &'static [String] {
    static C: OnceLock<Vec<String>> = OnceLock::new();
    C.get_or_init(|| {
        generate_corpus(DEFAULT_CORPUS_SEED)
            .into_iter()
            .map(|e| e.text)
            .collect()
    })
}

/// Corpus sentences containing at least one word with a synonym.
pub fn swappable() -> &'static [String] {
    static S: OnceLock<Vec<String>> = OnceLock::new();
    S.get_or_init(|| {
        corpus()
            .iter()
            .filter(|s| s.split_whitespace().any(|w| synonyms().contains_key(w)))
            .cloned()
            .collect()
    })
}

pub fn embedder() -> &'static HashedEmbedder {
    static E: OnceLock<HashedEmbedder> = OnceLock::new();
    E.get_or_init(HashedEmbedder::default)
}

/// Replaces every word that has a synonym.
pub fn swap_synonyms(s: &str) -> String {
    s.split(' ')
        .map(|w| synonyms().get(w).cloned().unwrap_or_else(|| w.to_owned()))
        .collect::<Vec<_>>()
        .join(" ")
}

pub fn l2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

pub const SURFACES: [&str; 8] = [
    "alpha beta",
    "beta gamma",
    "gamma delta",
    "delta eps",
    "eps zeta",
    "zeta eta",
    "eta theta",
    "theta iota",
];

/// Union-weight oracle: walks the sorted union of surfaces and takes the
/// min and max of the two weights per surface (absent = 0).
pub fn jaccard_oracle(a: &[(String, f64)], b: &[(String, f64)]) -> f64 {
    if a.is_empty() && b.is_empty() {
        return 0.0;
    }
    if a.is_empty() || b.is_empty() {
        return 1.0;
    }
    let lookup = |s: &[(String, f64)], k: &str| s.iter().find(|(n, _)| n == k).map_or(0.0, |(_, w)| *w);
    let keys: BTreeSet<&str> = a.iter().chain(b).map(|(k, _)| k.as_str()).collect();
    let (mut num, mut den) = (0.0, 0.0);
    for k in keys {
        let (x, y) = (lookup(a, k), lookup(b, k));
        num += x.min(y);
        den += x.max(y);
    }
    if den == 0.0 {
        0.0
    } else {
        1.0 - num / den
    }
}
