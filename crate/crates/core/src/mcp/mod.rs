//! JSON-RPC tool layer: protocol types, registry, the bundled tools, call
//! logging and transports.

pub mod corpus;
pub mod dispatch;
pub mod financial;
pub mod knowledge;
pub mod market;
pub mod protocol;
pub mod registry;
pub mod server;

use std::sync::Arc;

use thiserror::Error;

use crate::embeddings::{EmbedError, Embedder, HashedEmbedder};

pub use corpus::{CorpusEntry, Domain};
pub use dispatch::{Dispatcher, JsonlLog, MemoryLog, ToolCallRecord, ToolLog};
pub use financial::{FinancialData, StockPriceTool, TrendTool};
pub use knowledge::{KnowledgeBase, KnowledgeTool};
pub use market::{MarketSnapshot, PriceRecord};
pub use protocol::{RequestId, RpcError, RpcRequest, RpcResponse};
pub use registry::{validate_request, ParamKind, ParamSpec, Registry, Tool, ToolOutput, ValidatedCall};

#[derive(Debug, Error)]
pub enum McpError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Embed(#[from] EmbedError),
}

/// Loaded data behind the standard tools.
#[derive(Debug, Clone)]
pub struct ToolData {
    pub knowledge: Arc<KnowledgeBase>,
    pub market: Arc<MarketSnapshot>,
}

impl ToolData {
    pub fn new(knowledge: KnowledgeBase, market: MarketSnapshot) -> Self {
        Self {
            knowledge: Arc::new(knowledge),
            market: Arc::new(market),
        }
    }

    /// Generated corpus and snapshot with the given embedder.
    pub fn generated(corpus_seed: u64, market_seed: u64, embedder: Arc<dyn Embedder>) -> Result<Self, McpError> {
        let kb = KnowledgeBase::new(corpus::generate_corpus(corpus_seed), embedder)?;
        Ok(Self::new(kb, market::generate_snapshot(market_seed)))
    }

    /// Default generated data with the bundled embedder.
    pub fn bundled() -> Self {
        Self::generated(
            corpus::DEFAULT_CORPUS_SEED,
            market::DEFAULT_MARKET_SEED,
            Arc::new(HashedEmbedder::default()),
        )
        .expect("bundled data is valid")
    }
}

/// Registry with `knowledge_retrieval`, `get_stock_price` and `get_trend`.
pub fn standard_registry(data: &ToolData) -> Registry {
    let mut r = Registry::new();
    r.register(Arc::new(KnowledgeTool::new(data.knowledge.clone())));
    let fin = FinancialData::new(data.market.clone());
    r.register(Arc::new(StockPriceTool::new(fin.clone())));
    r.register(Arc::new(TrendTool::new(fin)));
    r
}
