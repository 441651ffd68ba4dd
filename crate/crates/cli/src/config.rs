//! Run configuration documents.

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use mcp_fidelity::embeddings::{CachedEmbedder, Embedder, ExternalEmbedder, HashedEmbedder, DEFAULT_DIM, DEFAULT_SEED};
use mcp_fidelity::experiments::{TrackName, TrackOverrides};
use mcp_fidelity::mcp::corpus::{generate_corpus, load_corpus, DEFAULT_CORPUS_SEED};
use mcp_fidelity::mcp::market::{generate_snapshot, DEFAULT_MARKET_SEED};
use mcp_fidelity::mcp::{KnowledgeBase, MarketSnapshot, ToolData};
use serde::Deserialize;

use crate::InputError;

/// Embedding provider selection.
#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProviderConfig {
    Hashed {
        #[serde(default = "default_dim")]
        dim: usize,
        #[serde(default = "default_hash_seed")]
        seed: u64,
    },
    External {
        endpoint: String,
        dim: usize,
        #[serde(default = "default_timeout_ms")]
        timeout_ms: u64,
    },
}

fn default_dim() -> usize {
    DEFAULT_DIM
}

fn default_hash_seed() -> u64 {
    DEFAULT_SEED
}

fn default_timeout_ms() -> u64 {
    10_000
}

impl Default for ProviderConfig {
    fn default() -> Self {
        ProviderConfig::Hashed {
            dim: DEFAULT_DIM,
            seed: DEFAULT_SEED,
        }
    }
}

impl ProviderConfig {
    pub fn build(&self) -> anyhow::Result<Arc<dyn Embedder>> {
        Ok(match self {
            ProviderConfig::Hashed { dim, seed } => {
                Arc::new(HashedEmbedder::new(*dim, *seed).map_err(|e| InputError(e.to_string()))?)
            }
            ProviderConfig::External {
                endpoint,
                dim,
                timeout_ms,
            } => {
                if *dim < 2 {
                    return Err(InputError("external provider dim must be >= 2".into()).into());
                }
                Arc::new(CachedEmbedder::new(ExternalEmbedder::new(
                    endpoint.clone(),
                    Duration::from_millis(*timeout_ms),
                    *dim,
                )))
            }
        })
    }
}

/// Data file locations.
#[derive(Debug, Clone, Default, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct DataPaths {
    pub corpus: Option<PathBuf>,
    pub snapshots: Option<PathBuf>,
    /// Corpus embedding matrix; created when missing.
    pub embeddings: Option<PathBuf>,
}

/// Configuration file for `run`.
#[derive(Debug, Clone, Default, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub track: Option<TrackName>,
    pub output_dir: Option<PathBuf>,
    pub record_runtime: Option<bool>,
    pub data: DataPaths,
    pub provider: Option<ProviderConfig>,
    pub overrides: TrackOverrides,
}

impl RunConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| InputError(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| InputError(format!("invalid config {}: {e}", path.display())).into())
    }
}

/// Loads or generates the tool data.
pub fn load_tool_data(paths: &DataPaths, embedder: Arc<dyn Embedder>, seed: Option<u64>) -> anyhow::Result<ToolData> {
    let input = |e: mcp_fidelity::mcp::McpError| InputError(e.to_string());
    let entries = match &paths.corpus {
        Some(p) => load_corpus(p).map_err(input)?,
        None => generate_corpus(seed.unwrap_or(DEFAULT_CORPUS_SEED)),
    };
    let market = match &paths.snapshots {
        Some(p) => MarketSnapshot::load(p).map_err(input)?,
        None => generate_snapshot(seed.unwrap_or(DEFAULT_MARKET_SEED)),
    };
    let kb = match &paths.embeddings {
        Some(p) => KnowledgeBase::with_sidecar(entries, embedder, p).map_err(input)?,
        None => KnowledgeBase::new(entries, embedder).map_err(input)?,
    };
    Ok(ToolData::new(kb, market))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_keys_rejected() {
        assert!(serde_json::from_str::<RunConfig>(r#"{"trakc": "baseline"}"#).is_err());
        assert!(serde_json::from_str::<RunConfig>(r#"{"overrides": {"chainz": 3}}"#).is_err());
    }

    #[test]
    fn full_document() {
        let c: RunConfig = serde_json::from_str(
            r#"{"track": "lambda_sweep", "output_dir": "out",
                "data": {"corpus": "c.jsonl"},
                "provider": {"kind": "hashed", "dim": 64},
                "overrides": {"chains": 3, "mode": "text"}}"#,
        )
        .unwrap();
        assert_eq!(c.track, Some(TrackName::LambdaSweep));
        assert_eq!(c.overrides.chains, Some(3));
        assert_eq!(
            c.provider,
            Some(ProviderConfig::Hashed {
                dim: 64,
                seed: DEFAULT_SEED
            })
        );
    }
}
