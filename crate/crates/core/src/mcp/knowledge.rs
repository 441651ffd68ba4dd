//! Deterministic top-k retrieval over an embedded corpus.

use std::collections::HashMap;
use std::path::Path;
use std::sync::{Arc, RwLock};

use serde_json::{json, Map, Value};

use super::corpus::CorpusEntry;
use super::protocol::RpcError;
use super::registry::{ParamKind, ParamSpec, Tool, ToolOutput};
use super::McpError;
use crate::embeddings::{cosine, read_matrix, write_matrix, Embedder, EmbeddingVector};

pub const DEFAULT_TOP_K: usize = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct Retrieval {
    pub ids: Vec<String>,
    pub texts: Vec<String>,
    pub scores: Vec<f64>,
}

impl Retrieval {
    /// `1 - best cosine`, clipped to `[0, 1]`; 1 for an empty result.
    pub fn uncertainty(&self) -> f64 {
        self.scores.first().map_or(1.0, |s| (1.0 - s).clamp(0.0, 1.0))
    }
}

pub struct KnowledgeBase {
    entries: Vec<CorpusEntry>,
    matrix: Vec<EmbeddingVector>,
    embedder: Arc<dyn Embedder>,
    cache: RwLock<HashMap<(String, usize), Arc<Retrieval>>>,
}

impl std::fmt::Debug for KnowledgeBase {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("KnowledgeBase")
            .field("entries", &self.entries.len())
            .field("embedder", &self.embedder.descriptor().name)
            .finish()
    }
}

impl KnowledgeBase {
    /// Embeds every entry up front.
    pub fn new(entries: Vec<CorpusEntry>, embedder: Arc<dyn Embedder>) -> Result<Self, McpError> {
        if entries.is_empty() {
            return Err(McpError::Config("knowledge corpus is empty".into()));
        }
        let texts: Vec<&str> = entries.iter().map(|e| e.text.as_str()).collect();
        let matrix = embedder.embed_batch(&texts)?;
        Self::with_matrix(entries, matrix, embedder)
    }

    /// Uses precomputed embeddings, one row per entry.
    pub fn with_matrix(
        entries: Vec<CorpusEntry>,
        matrix: Vec<EmbeddingVector>,
        embedder: Arc<dyn Embedder>,
    ) -> Result<Self, McpError> {
        if entries.is_empty() {
            return Err(McpError::Config("knowledge corpus is empty".into()));
        }
        if matrix.len() != entries.len() {
            return Err(McpError::Config(format!(
                "embedding matrix has {} rows for {} entries",
                matrix.len(),
                entries.len()
            )));
        }
        let dim = embedder.descriptor().dim;
        if let Some(row) = matrix.iter().find(|r| r.dim() != dim) {
            return Err(McpError::Config(format!(
                "embedding row of dimension {} for a provider of dimension {dim}",
                row.dim()
            )));
        }
        Ok(Self {
            entries,
            matrix,
            embedder,
            cache: RwLock::new(HashMap::new()),
        })
    }

    /// Loads embeddings from a sidecar file, or computes and writes them.
    pub fn with_sidecar(
        entries: Vec<CorpusEntry>,
        embedder: Arc<dyn Embedder>,
        sidecar: &Path,
    ) -> Result<Self, McpError> {
        if sidecar.exists() {
            let matrix = read_matrix(sidecar)?.to_vectors();
            return Self::with_matrix(entries, matrix, embedder);
        }
        let kb = Self::new(entries, embedder)?;
        write_matrix(sidecar, &kb.matrix)?;
        Ok(kb)
    }

    pub fn entries(&self) -> &[CorpusEntry] {
        &self.entries
    }

    pub fn matrix(&self) -> &[EmbeddingVector] {
        &self.matrix
    }

    pub fn embedder(&self) -> &Arc<dyn Embedder> {
        &self.embedder
    }

    /// Top `top_k` entries by cosine similarity to the query, ties broken by
    /// ascending id. Repeat queries are served from the cache.
    pub fn retrieve(&self, query: &str, top_k: usize) -> Result<Arc<Retrieval>, McpError> {
        let key = (query.to_owned(), top_k);
        if let Some(hit) = self.cache.read().expect("cache lock").get(&key) {
            return Ok(hit.clone());
        }
        let q = self.embedder.embed(query)?;
        let mut scored = Vec::with_capacity(self.entries.len());
        for (i, row) in self.matrix.iter().enumerate() {
            let s = if q.is_sentinel() || row.is_sentinel() {
                0.0
            } else {
                cosine(&q, row)?
            };
            scored.push((s, i));
        }
        scored.sort_by(|a, b| {
            b.0.total_cmp(&a.0)
                .then_with(|| self.entries[a.1].id.cmp(&self.entries[b.1].id))
        });
        scored.truncate(top_k);
        let result = Arc::new(Retrieval {
            ids: scored.iter().map(|&(_, i)| self.entries[i].id.clone()).collect(),
            texts: scored.iter().map(|&(_, i)| self.entries[i].text.clone()).collect(),
            scores: scored.iter().map(|&(s, _)| s).collect(),
        });
        let mut cache = self.cache.write().expect("cache lock");
        Ok(cache.entry(key).or_insert(result).clone())
    }
}

/// `knowledge_retrieval(query, top_k = 3)`.
pub struct KnowledgeTool {
    kb: Arc<KnowledgeBase>,
    params: Vec<ParamSpec>,
}

impl KnowledgeTool {
    pub const NAME: &'static str = "knowledge_retrieval";

    pub fn new(kb: Arc<KnowledgeBase>) -> Self {
        Self {
            kb,
            params: vec![
                ParamSpec::required("query", ParamKind::String),
                ParamSpec::optional("top_k", ParamKind::Integer, json!(DEFAULT_TOP_K)).at_least(1.0),
            ],
        }
    }
}

impl Tool for KnowledgeTool {
    fn name(&self) -> &str {
        Self::NAME
    }

    fn params(&self) -> &[ParamSpec] {
        &self.params
    }

    fn call(&self, params: &Map<String, Value>) -> Result<ToolOutput, RpcError> {
        let query = params["query"].as_str().unwrap_or_default();
        let top_k = params["top_k"].as_u64().unwrap_or(DEFAULT_TOP_K as u64) as usize;
        let r = self
            .kb
            .retrieve(query, top_k)
            .map_err(|e| RpcError::internal(e.to_string()))?;
        Ok(ToolOutput {
            result: json!(r.texts),
            uncertainty: Some(r.uncertainty()),
        })
    }

    fn query_text(&self, params: &Map<String, Value>) -> String {
        params
            .get("query")
            .and_then(Value::as_str)
            .unwrap_or_default()
            .to_owned()
    }
}
