//! Adaptive query-chain simulation.
//!
//! A latent AR(1) driver `x` carries dependence between steps:
//! `x <- beta x + sqrt(1 - beta^2) xi` with `xi` standard normal, so that
//! the lag-`k` autocorrelation is `beta^k`. The driver starts at 0 and is
//! reset to 0 after every step `t` with `t % m == 0` when re-grounding is
//! configured. In score mode it shifts the two distortion components
//! directly; in text mode it sets the intensity of the simulated
//! responder's corruption of retrieved text.

pub mod corrupt;

use std::io::{self, BufRead, Write};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};
use thiserror::Error;

use crate::bounds::DistortionSeries;
use crate::embeddings::Embedder;
use crate::mcp::corpus::CorpusSeed;
use crate::mcp::knowledge::KnowledgeTool;
use crate::mcp::{Dispatcher, RpcRequest, ToolCallRecord, ToolData};
use crate::metric::{extract_facts, hybrid_distortion, DistortionBreakdown};

pub use corrupt::{chunk_pool, corrupt, CorruptionRates};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Distortion values are generated directly.
    #[default]
    Score,
    /// Retrieved text is corrupted and the distortion measured.
    Text,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Responder {
    /// The bundled corruption model.
    #[default]
    Bundled,
    /// Reserved for a chat-completion backend; no client ships.
    External,
}

impl Responder {
    pub fn label(self) -> &'static str {
        match self {
            Responder::Bundled => "bundled",
            Responder::External => "external",
        }
    }
}

/// Configuration of one chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChainConfig {
    /// Number of steps `T`.
    pub horizon: usize,
    pub beta: f64,
    pub lambda: f64,
    pub seed: u64,
    pub mode: Mode,
    /// Base per-step rate `r0`.
    pub base_rate: f64,
    /// Score-mode mean of `d_set`; defaults to `base_rate`.
    pub rate_set: Option<f64>,
    /// Score-mode mean of `d_emb`; defaults to `base_rate`.
    pub rate_emb: Option<f64>,
    /// Scale `sigma` of the latent driver.
    pub noise_sigma: f64,
    /// Probability that a retrieval result is corrupted before rendering.
    pub tool_noise: f64,
    pub reground_interval: Option<u32>,
    pub branching: u32,
    pub responder: Responder,
    pub top_k: usize,
    /// Per-word synonym probability when a paraphrase fires.
    pub synonym_rate: f64,
}

impl Default for ChainConfig {
    fn default() -> Self {
        Self {
            horizon: 10,
            beta: 0.7,
            lambda: 0.5,
            seed: 42,
            mode: Mode::Score,
            base_rate: 0.5,
            rate_set: None,
            rate_emb: None,
            noise_sigma: 0.05,
            tool_noise: 0.0,
            reground_interval: None,
            branching: 1,
            responder: Responder::Bundled,
            top_k: 3,
            synonym_rate: 0.5,
        }
    }
}

#[derive(Debug, Error)]
pub enum ChainError {
    #[error("invalid chain configuration: {0}")]
    Config(String),
    #[error("chain {chain} failed at step {step}: {message}")]
    Step {
        chain: u64,
        step: usize,
        message: String,
        /// Steps completed before the failure.
        partial: Box<ChainTrace>,
    },
}

impl ChainConfig {
    pub fn rate_set(&self) -> f64 {
        self.rate_set.unwrap_or(self.base_rate)
    }

    pub fn rate_emb(&self) -> f64 {
        self.rate_emb.unwrap_or(self.base_rate)
    }

    pub fn validate(&self) -> Result<(), ChainError> {
        let bad = |m: String| Err(ChainError::Config(m));
        let unit = |v: f64| (0.0..=1.0).contains(&v);
        if self.horizon == 0 {
            return bad("horizon must be >= 1".into());
        }
        if !(0.0..1.0).contains(&self.beta) {
            return bad(format!("beta = {} is outside [0, 1)", self.beta));
        }
        for (name, v) in [
            ("lambda", self.lambda),
            ("base_rate", self.base_rate),
            ("rate_set", self.rate_set()),
            ("rate_emb", self.rate_emb()),
            ("tool_noise", self.tool_noise),
            ("synonym_rate", self.synonym_rate),
        ] {
            if !unit(v) {
                return bad(format!("{name} = {v} is outside [0, 1]"));
            }
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return bad(format!("noise_sigma = {} must be finite and >= 0", self.noise_sigma));
        }
        if self.branching != 1 {
            return bad("only linear chains (branching = 1) are simulated".into());
        }
        if self.reground_interval == Some(0) {
            return bad("reground_interval must be >= 1".into());
        }
        if self.top_k == 0 {
            return bad("top_k must be >= 1".into());
        }
        if self.responder == Responder::External {
            return bad("no external responder client is available; use \"bundled\"".into());
        }
        Ok(())
    }

    /// Whether the latent driver is reset after step `t` (1-based).
    pub fn resets_after(&self, t: usize) -> bool {
        self.reground_interval.is_some_and(|m| t.is_multiple_of(m as usize))
    }
}

/// Latent dependence driver.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct DependenceState {
    pub x: f64,
    pub step: usize,
}

impl DependenceState {
    /// One AR(1) update with an explicit innovation.
    pub fn advance_with_innovation(&mut self, beta: f64, xi: f64) {
        self.x = beta * self.x + (1.0 - beta * beta).sqrt() * xi;
        self.step += 1;
    }

    pub fn reset(&mut self) {
        self.x = 0.0;
    }
}

/// Advances the driver with a standard normal innovation.
pub fn advance_dependence<R: Rng>(state: &mut DependenceState, beta: f64, rng: &mut R) {
    let xi: f64 = rng.sample(StandardNormal);
    state.advance_with_innovation(beta, xi);
}

/// Score-mode distortion for the current driver value.
pub fn synthetic_step(state: &DependenceState, config: &ChainConfig) -> DistortionBreakdown {
    let shift = config.noise_sigma * state.x;
    let d_set = (config.rate_set() + shift).clamp(0.0, 1.0);
    let d_emb = (config.rate_emb() + shift).clamp(0.0, 1.0);
    DistortionBreakdown::combine(d_set, d_emb, config.lambda)
}

/// Corruption intensity `clip(r0 + sigma x)` for text mode.
pub fn intensity(state: &DependenceState, config: &ChainConfig) -> f64 {
    (config.base_rate + config.noise_sigma * state.x).clamp(0.0, 1.0)
}

/// Chooses the next query. With probability `beta`, and when the previous
/// response has facts, asks a follow-up about one of them; otherwise asks a
/// fresh question. Returns the query and whether it was adaptive.
pub fn next_query<R: Rng>(previous: Option<&str>, beta: f64, rng: &mut R) -> (String, bool) {
    let seed = CorpusSeed::bundled();
    let adaptive = rng.random::<f64>() < beta;
    if adaptive {
        if let Some(prev) = previous {
            let facts: Vec<String> = extract_facts(prev).surfaces().map(str::to_owned).collect();
            if !facts.is_empty() {
                let fact = &facts[rng.random_range(0..facts.len())];
                let template = &seed.followups[rng.random_range(0..seed.followups.len())];
                return (template.replace("{f}", fact), true);
            }
        }
    }
    let domain = &seed.domains[rng.random_range(0..seed.domains.len())];
    let subjects = domain.subjects();
    let subject = &subjects[rng.random_range(0..subjects.len())];
    let template = &seed.questions[rng.random_range(0..seed.questions.len())];
    (template.replace("{s}", subject), false)
}

/// Tools and data used by text mode.
pub struct TextEnv {
    pub dispatcher: Arc<Dispatcher>,
    pub embedder: Arc<dyn Embedder>,
    corpus: Vec<String>,
    pool: Vec<Vec<String>>,
}

impl TextEnv {
    pub fn new(data: &ToolData, dispatcher: Arc<Dispatcher>) -> Self {
        let corpus: Vec<String> = data.knowledge.entries().iter().map(|e| e.text.clone()).collect();
        let pool = chunk_pool(corpus.iter().map(String::as_str));
        Self {
            dispatcher,
            embedder: data.knowledge.embedder().clone(),
            corpus,
            pool,
        }
    }
}

/// One simulated step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub query: Option<String>,
    pub adaptive: Option<bool>,
    pub ref_text: Option<String>,
    pub obs_text: Option<String>,
    #[serde(flatten)]
    pub breakdown: DistortionBreakdown,
    pub cumulative: f64,
}

/// Full record of one chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainTrace {
    pub config: ChainConfig,
    pub chain_index: u64,
    pub steps: Vec<StepRecord>,
    /// Tool invocations; kept out of the trace file because latencies vary.
    #[serde(skip)]
    pub tool_calls: Vec<ToolCallRecord>,
}

impl ChainTrace {
    pub fn deltas(&self) -> Vec<f64> {
        self.steps.iter().map(|s| s.breakdown.d_sem).collect()
    }

    pub fn final_cumulative(&self) -> f64 {
        self.steps.last().map_or(0.0, |s| s.cumulative)
    }

    /// Writes a header line followed by one line per step.
    pub fn write_jsonl<W: Write>(&self, w: &mut W, config_id: &str) -> io::Result<()> {
        let header = json!({
            "kind": "header",
            "config_id": config_id,
            "chain": self.chain_index,
            "config": self.config,
        });
        writeln!(w, "{header}")?;
        for s in &self.steps {
            let mut v = serde_json::to_value(s)?;
            let obj = v.as_object_mut().expect("step is an object");
            obj.insert("kind".into(), json!("step"));
            obj.insert("config_id".into(), json!(config_id));
            obj.insert("chain".into(), json!(self.chain_index));
            writeln!(w, "{v}")?;
        }
        Ok(())
    }
}

impl DistortionSeries for ChainTrace {
    fn steps(&self) -> usize {
        self.steps.len()
    }

    fn delta(&self, index: usize) -> f64 {
        self.steps[index].breakdown.d_sem
    }

    fn cumulative(&self, index: usize) -> f64 {
        self.steps[index].cumulative
    }
}

/// Traces read back from a trace file, grouped by configuration id.
pub fn read_traces_jsonl<R: BufRead>(reader: R) -> io::Result<Vec<(String, ChainTrace)>> {
    let invalid = |m: String| io::Error::new(io::ErrorKind::InvalidData, m);
    let mut out: Vec<(String, ChainTrace)> = Vec::new();
    for (n, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let mut v: Map<String, Value> =
            serde_json::from_str(&line).map_err(|e| invalid(format!("line {}: {e}", n + 1)))?;
        let kind = v.remove("kind");
        let config_id = v
            .remove("config_id")
            .and_then(|c| c.as_str().map(str::to_owned))
            .unwrap_or_default();
        let chain = v.remove("chain").and_then(|c| c.as_u64()).unwrap_or(0);
        match kind.as_ref().and_then(Value::as_str) {
            Some("header") => {
                let config: ChainConfig = serde_json::from_value(v.remove("config").unwrap_or(Value::Null))
                    .map_err(|e| invalid(format!("line {}: {e}", n + 1)))?;
                out.push((
                    config_id,
                    ChainTrace {
                        config,
                        chain_index: chain,
                        steps: Vec::new(),
                        tool_calls: Vec::new(),
                    },
                ));
            }
            Some("step") => {
                let step: StepRecord =
                    serde_json::from_value(Value::Object(v)).map_err(|e| invalid(format!("line {}: {e}", n + 1)))?;
                let Some((_, trace)) = out.last_mut() else {
                    return Err(invalid(format!("line {}: step before any header", n + 1)));
                };
                trace.steps.push(step);
            }
            _ => return Err(invalid(format!("line {}: unknown record kind", n + 1))),
        }
    }
    Ok(out)
}

/// Per-chain generator: the configured seed with the chain index as stream.
pub fn chain_rng(seed: u64, chain_index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(chain_index);
    rng
}

struct TextOutcome {
    query: String,
    adaptive: bool,
    ref_text: String,
    obs_text: String,
    breakdown: DistortionBreakdown,
    call: ToolCallRecord,
}

fn text_step<R: Rng>(
    state: &DependenceState,
    config: &ChainConfig,
    env: &TextEnv,
    previous: Option<&str>,
    step: usize,
    rng: &mut R,
) -> Result<TextOutcome, String> {
    let (query, adaptive) = next_query(previous, config.beta, rng);
    let mut params = Map::new();
    params.insert("query".into(), json!(query));
    params.insert("top_k".into(), json!(config.top_k));
    let req = RpcRequest::new(KnowledgeTool::NAME, params, step as i64);
    let (resp, call) = env.dispatcher.dispatch_recorded(&req, step as u64);
    let result = match resp.outcome {
        Ok(v) => v,
        Err(e) => return Err(format!("tool error: {e}")),
    };
    let retrieved: Vec<String> = serde_json::from_value(result).map_err(|e| format!("tool result: {e}"))?;
    let ref_text = retrieved.join(" ");

    let mut delivered = retrieved;
    if !delivered.is_empty() && !env.corpus.is_empty() && rng.random::<f64>() < config.tool_noise {
        let slot = rng.random_range(0..delivered.len());
        delivered[slot] = env.corpus[rng.random_range(0..env.corpus.len())].clone();
    }
    let rates = CorruptionRates::from_intensity(intensity(state, config), config.synonym_rate);
    let obs_text = corrupt(&delivered, &rates, &env.pool, rng);
    let breakdown =
        hybrid_distortion(&ref_text, &obs_text, config.lambda, env.embedder.as_ref()).map_err(|e| e.to_string())?;
    Ok(TextOutcome {
        query,
        adaptive,
        ref_text,
        obs_text,
        breakdown,
        call,
    })
}

/// Runs one chain of `config.horizon` steps. Text mode requires `env`.
pub fn run_chain(config: &ChainConfig, chain_index: u64, env: Option<&TextEnv>) -> Result<ChainTrace, ChainError> {
    config.validate()?;
    if config.mode == Mode::Text && env.is_none() {
        return Err(ChainError::Config("text mode needs tool data".into()));
    }
    let mut rng = chain_rng(config.seed, chain_index);
    let mut state = DependenceState::default();
    let mut trace = ChainTrace {
        config: config.clone(),
        chain_index,
        steps: Vec::with_capacity(config.horizon),
        tool_calls: Vec::new(),
    };
    let mut total = 0.0;
    let mut previous: Option<String> = None;
    for t in 1..=config.horizon {
        advance_dependence(&mut state, config.beta, &mut rng);
        let record = match (config.mode, env) {
            (Mode::Text, Some(env)) => {
                let out = match text_step(&state, config, env, previous.as_deref(), t, &mut rng) {
                    Ok(o) => o,
                    Err(message) => {
                        return Err(ChainError::Step {
                            chain: chain_index,
                            step: t,
                            message,
                            partial: Box::new(trace),
                        })
                    }
                };
                total += out.breakdown.d_sem;
                trace.tool_calls.push(out.call);
                previous = Some(out.obs_text.clone());
                StepRecord {
                    step: t,
                    query: Some(out.query),
                    adaptive: Some(out.adaptive),
                    ref_text: Some(out.ref_text),
                    obs_text: Some(out.obs_text),
                    breakdown: out.breakdown,
                    cumulative: total,
                }
            }
            _ => {
                let b = synthetic_step(&state, config);
                total += b.d_sem;
                StepRecord {
                    step: t,
                    query: None,
                    adaptive: None,
                    ref_text: None,
                    obs_text: None,
                    breakdown: b,
                    cumulative: total,
                }
            }
        };
        trace.steps.push(record);
        if config.resets_after(t) {
            state.reset();
        }
    }
    Ok(trace)
}
