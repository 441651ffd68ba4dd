//! Experiment tracks: grids of chain configurations, aggregation, calibrated
//! envelopes and result files.

mod artifacts;

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bounds::{
    build_envelope, estimate_first_step_rate, violation_rate, DependencyParams, Envelope, ViolationMode,
};
use crate::chain::{run_chain, ChainConfig, ChainError, ChainTrace, Mode, Responder, TextEnv};
use crate::diagnostics::{autocorrelation, fit_beta, DEFAULT_MAX_LAG};
use crate::embeddings::splitmix64;
use crate::mcp::{standard_registry, Dispatcher, McpError, ToolData};

pub use artifacts::{emit_plot_data, round_sig, write_artifacts, PLOT_HEADER};

pub const DEFAULT_DELTA: f64 = 0.05;
pub const DEFAULT_SEED: u64 = 42;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Chain(#[from] ChainError),
    #[error(transparent)]
    Mcp(#[from] McpError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrackName {
    Baseline,
    LambdaSweep,
    LongChain,
    HighBeta,
    Noise,
}

impl TrackName {
    pub const ALL: [TrackName; 5] = [
        TrackName::Baseline,
        TrackName::LambdaSweep,
        TrackName::LongChain,
        TrackName::HighBeta,
        TrackName::Noise,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TrackName::Baseline => "baseline",
            TrackName::LambdaSweep => "lambda_sweep",
            TrackName::LongChain => "long_chain",
            TrackName::HighBeta => "high_beta",
            TrackName::Noise => "noise",
        }
    }
}

impl fmt::Display for TrackName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TrackName {
    type Err = ExperimentError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        TrackName::ALL.into_iter().find(|t| t.as_str() == s).ok_or_else(|| {
            ExperimentError::Config(format!(
                "unknown track {s:?}; expected one of baseline, lambda_sweep, long_chain, high_beta, noise"
            ))
        })
    }
}

/// One configuration of a track.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub config_id: String,
    pub config: ChainConfig,
}

/// A named track with its grid and run settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackSpec {
    pub name: TrackName,
    pub grid: Vec<GridPoint>,
    pub chains: usize,
    pub seed: u64,
    pub delta: f64,
    pub violation_mode: ViolationMode,
}

/// Settings applied on top of a standard track. Grid variables (the swept
/// parameter of each track) are not overridden.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrackOverrides {
    pub chains: Option<usize>,
    pub seed: Option<u64>,
    pub delta: Option<f64>,
    pub mode: Option<Mode>,
    pub horizon: Option<usize>,
    pub beta: Option<f64>,
    pub lambda: Option<f64>,
    pub base_rate: Option<f64>,
    pub rate_set: Option<f64>,
    pub rate_emb: Option<f64>,
    pub noise_sigma: Option<f64>,
    pub tool_noise: Option<f64>,
    pub reground_interval: Option<u32>,
    pub top_k: Option<usize>,
    pub synonym_rate: Option<f64>,
    pub responder: Option<Responder>,
    pub violation_mode: Option<ViolationMode>,
}

fn point(id: String, config: ChainConfig) -> GridPoint {
    GridPoint { config_id: id, config }
}

impl TrackSpec {
    /// The standard grid of a track.
    pub fn standard(name: TrackName) -> Self {
        let base = ChainConfig::default();
        let (grid, chains) = match name {
            TrackName::Baseline => (
                vec![point(
                    "baseline".into(),
                    ChainConfig {
                        horizon: 10,
                        beta: 0.7,
                        lambda: 0.5,
                        ..base
                    },
                )],
                50,
            ),
            TrackName::LambdaSweep => (
                [0.0, 0.25, 0.5, 0.75, 1.0]
                    .iter()
                    .map(|&lambda| {
                        point(
                            format!("lambda_{lambda:.2}"),
                            ChainConfig {
                                horizon: 30,
                                beta: 0.7,
                                lambda,
                                rate_set: Some(0.9),
                                rate_emb: Some(0.17),
                                ..base.clone()
                            },
                        )
                    })
                    .collect(),
                8,
            ),
            TrackName::LongChain => (
                [0.5, 0.7, 0.9]
                    .iter()
                    .map(|&beta| {
                        point(
                            format!("beta_{beta:.2}"),
                            ChainConfig {
                                horizon: 60,
                                beta,
                                ..base.clone()
                            },
                        )
                    })
                    .collect(),
                6,
            ),
            TrackName::HighBeta => (
                [0.95, 0.98]
                    .iter()
                    .map(|&beta| {
                        point(
                            format!("beta_{beta:.2}"),
                            ChainConfig {
                                horizon: 30,
                                beta,
                                ..base.clone()
                            },
                        )
                    })
                    .collect(),
                6,
            ),
            TrackName::Noise => (
                [0.0, 0.1, 0.2]
                    .iter()
                    .map(|&tool_noise| {
                        point(
                            format!("noise_{tool_noise:.2}"),
                            ChainConfig {
                                horizon: 30,
                                beta: 0.7,
                                mode: Mode::Text,
                                tool_noise,
                                ..base.clone()
                            },
                        )
                    })
                    .collect(),
                8,
            ),
        };
        let mut spec = Self {
            name,
            grid,
            chains,
            seed: DEFAULT_SEED,
            delta: DEFAULT_DELTA,
            violation_mode: ViolationMode::FinalStep,
        };
        spec.reseed();
        spec
    }

    /// Derives each grid point's seed from the track seed and its index.
    fn reseed(&mut self) {
        for (i, p) in self.grid.iter_mut().enumerate() {
            p.config.seed = splitmix64(self.seed ^ splitmix64(i as u64));
        }
    }

    pub fn with_overrides(mut self, o: &TrackOverrides) -> Result<Self, ExperimentError> {
        if let Some(c) = o.chains {
            if c == 0 {
                return Err(ExperimentError::Config("chains must be >= 1".into()));
            }
            self.chains = c;
        }
        if let Some(d) = o.delta {
            if !(d > 0.0 && d < 1.0) {
                return Err(ExperimentError::Config(format!("delta = {d} is outside (0, 1)")));
            }
            self.delta = d;
        }
        if let Some(v) = o.violation_mode {
            self.violation_mode = v;
        }
        let name = self.name;
        for p in &mut self.grid {
            let c = &mut p.config;
            if let Some(v) = o.mode {
                c.mode = v;
            }
            if let Some(v) = o.horizon {
                c.horizon = v;
            }
            if let Some(v) = o
                .beta
                .filter(|_| !matches!(name, TrackName::LongChain | TrackName::HighBeta))
            {
                c.beta = v;
            }
            if let Some(v) = o.lambda.filter(|_| name != TrackName::LambdaSweep) {
                c.lambda = v;
            }
            if let Some(v) = o.tool_noise.filter(|_| name != TrackName::Noise) {
                c.tool_noise = v;
            }
            if let Some(v) = o.base_rate {
                c.base_rate = v;
            }
            if o.rate_set.is_some() {
                c.rate_set = o.rate_set;
            }
            if o.rate_emb.is_some() {
                c.rate_emb = o.rate_emb;
            }
            if let Some(v) = o.noise_sigma {
                c.noise_sigma = v;
            }
            if o.reground_interval.is_some() {
                c.reground_interval = o.reground_interval;
            }
            if let Some(v) = o.top_k {
                c.top_k = v;
            }
            if let Some(v) = o.synonym_rate {
                c.synonym_rate = v;
            }
            if let Some(v) = o.responder {
                c.responder = v;
            }
            c.validate()?;
        }
        if let Some(s) = o.seed {
            self.seed = s;
            self.reseed();
        }
        Ok(self)
    }

    pub fn responder(&self) -> Responder {
        self.grid.first().map_or(Responder::Bundled, |p| p.config.responder)
    }

    pub fn needs_text(&self) -> bool {
        self.grid.iter().any(|p| p.config.mode == Mode::Text)
    }
}

/// Runs `chains` chains of one configuration in parallel, in index order.
pub fn run_chains(config: &ChainConfig, chains: usize, env: Option<&TextEnv>) -> Result<Vec<ChainTrace>, ChainError> {
    (0..chains as u64)
        .into_par_iter()
        .map(|i| run_chain(config, i, env))
        .collect()
}

/// Sample mean and standard deviation (n - 1 denominator; 0 for n = 1).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, var.sqrt())
}

/// Aggregates and bounds for one grid point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridResult {
    pub config_id: String,
    pub config: ChainConfig,
    pub chains: usize,
    /// Mean cumulative distortion per step across chains.
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    pub envelope: Option<Envelope>,
    pub r_hat: Option<f64>,
    pub beta_hat: Option<f64>,
    pub gamma_hat: Option<f64>,
    /// `upper[T] / mean D(T)`.
    pub margin: Option<f64>,
    pub violation_rate: Option<f64>,
    pub in_assumptions: bool,
    pub notes: Vec<String>,
    pub error: Option<String>,
    #[serde(skip)]
    pub traces: Vec<ChainTrace>,
}

impl GridResult {
    fn failed(point: &GridPoint, chains: usize, error: String) -> Self {
        Self {
            config_id: point.config_id.clone(),
            config: point.config.clone(),
            chains,
            mean: Vec::new(),
            std: Vec::new(),
            envelope: None,
            r_hat: None,
            beta_hat: None,
            gamma_hat: None,
            margin: None,
            violation_rate: None,
            in_assumptions: false,
            notes: Vec::new(),
            error: Some(error),
            traces: Vec::new(),
        }
    }

    pub fn final_mean(&self) -> Option<f64> {
        self.mean.last().copied()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackResult {
    pub spec: TrackSpec,
    pub grid: Vec<GridResult>,
    pub runtime_s: f64,
}

fn dependency_params(c: &ChainConfig) -> DependencyParams {
    DependencyParams {
        alpha: 1.0,
        beta: c.beta,
        branching: c.branching,
        reground_interval: c.reground_interval,
        delta_max: 1.0,
    }
}

/// Aggregates finished traces of one grid point.
pub fn summarize_point(
    point: &GridPoint,
    traces: Vec<ChainTrace>,
    delta: f64,
    mode: ViolationMode,
) -> Result<GridResult, ExperimentError> {
    let horizon = point.config.horizon;
    let chains = traces.len();
    let mut mean = Vec::with_capacity(horizon);
    let mut std = Vec::with_capacity(horizon);
    for t in 0..horizon {
        let col: Vec<f64> = traces.iter().map(|tr| tr.steps[t].cumulative).collect();
        let (m, s) = mean_std(&col);
        mean.push(m);
        std.push(s);
    }
    let params = dependency_params(&point.config);
    let in_assumptions = params.validate().is_ok();
    let r_hat = estimate_first_step_rate(&traces).map_err(|e| ExperimentError::Config(e.to_string()))?;
    let envelope =
        build_envelope(horizon, r_hat, &params, delta).map_err(|e| ExperimentError::Config(e.to_string()))?;
    let violation = violation_rate(&traces, &envelope, mode).map_err(|e| ExperimentError::Config(e.to_string()))?;
    let final_mean = mean.last().copied().unwrap_or(0.0);
    let margin = (final_mean > 0.0).then(|| envelope.final_upper() / final_mean);

    let mut notes = Vec::new();
    let max_lag = DEFAULT_MAX_LAG.min(horizon.saturating_sub(1));
    let beta_hat = match autocorrelation(&traces, max_lag).and_then(|est| fit_beta(&est)) {
        Ok(b) => Some(b),
        Err(e) => {
            notes.push(format!("beta_hat unavailable: {e}"));
            None
        }
    };
    Ok(GridResult {
        config_id: point.config_id.clone(),
        config: point.config.clone(),
        chains,
        mean,
        std,
        gamma_hat: Some(envelope.gamma),
        envelope: Some(envelope),
        r_hat: Some(r_hat),
        beta_hat,
        margin,
        violation_rate: Some(violation),
        in_assumptions,
        notes,
        error: None,
        traces,
    })
}

/// Runs every grid point of a track. Text-mode points use `data`, or the
/// bundled tool data when none is given. A failing grid point is recorded
/// in its result and does not stop the others.
pub fn run_track(spec: &TrackSpec, data: Option<&ToolData>) -> Result<TrackResult, ExperimentError> {
    let started = Instant::now();
    for p in &spec.grid {
        p.config.validate()?;
    }
    let env = if spec.needs_text() {
        let data = match data {
            Some(d) => d.clone(),
            None => ToolData::bundled(),
        };
        let dispatcher = Arc::new(Dispatcher::new(standard_registry(&data)));
        Some(TextEnv::new(&data, dispatcher))
    } else {
        None
    };
    let mut grid = Vec::with_capacity(spec.grid.len());
    for p in &spec.grid {
        log::info!("{} / {}: {} chains", spec.name, p.config_id, spec.chains);
        let result = match run_chains(&p.config, spec.chains, env.as_ref()) {
            Ok(traces) => summarize_point(p, traces, spec.delta, spec.violation_mode)?,
            Err(e) => {
                log::error!("{} / {} aborted: {e}", spec.name, p.config_id);
                GridResult::failed(p, spec.chains, e.to_string())
            }
        };
        grid.push(result);
    }
    Ok(TrackResult {
        spec: spec.clone(),
        grid,
        runtime_s: started.elapsed().as_secs_f64(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embeddings::{EmbedError, Embedder, EmbeddingVector, HashedEmbedder, ProviderDescriptor};

    #[test]
    fn standard_grids() {
        let b = TrackSpec::standard(TrackName::Baseline);
        assert_eq!((b.grid.len(), b.chains), (1, 50));
        assert_eq!(b.grid[0].config.horizon, 10);
        let l = TrackSpec::standard(TrackName::LambdaSweep);
        assert_eq!(l.grid.len(), 5);
        assert_eq!(l.grid[4].config.lambda, 1.0);
        let lc = TrackSpec::standard(TrackName::LongChain);
        assert_eq!(
            lc.grid.iter().map(|p| p.config.beta).collect::<Vec<_>>(),
            vec![0.5, 0.7, 0.9]
        );
        assert!(lc.grid.iter().all(|p| p.config.horizon == 60));
        let h = TrackSpec::standard(TrackName::HighBeta);
        assert_eq!((h.grid.len(), h.chains), (2, 6));
        let n = TrackSpec::standard(TrackName::Noise);
        assert!(n.needs_text());
        assert_eq!(n.grid[2].config.tool_noise, 0.2);
    }

    #[test]
    fn track_names_parse() {
        for t in TrackName::ALL {
            assert_eq!(t.as_str().parse::<TrackName>().unwrap(), t);
        }
        assert!("figure_9".parse::<TrackName>().is_err());
    }

    #[test]
    fn overrides_leave_grid_variable() {
        let o = TrackOverrides {
            lambda: Some(0.3),
            chains: Some(3),
            seed: Some(7),
            ..TrackOverrides::default()
        };
        let s = TrackSpec::standard(TrackName::LambdaSweep).with_overrides(&o).unwrap();
        assert_eq!(s.chains, 3);
        assert_eq!(s.grid[0].config.lambda, 0.0);
        let s2 = TrackSpec::standard(TrackName::Baseline).with_overrides(&o).unwrap();
        assert_eq!(s2.grid[0].config.lambda, 0.3);
        assert_ne!(
            s2.grid[0].config.seed,
            TrackSpec::standard(TrackName::Baseline).grid[0].config.seed
        );
        let bad = TrackOverrides {
            chains: Some(0),
            ..TrackOverrides::default()
        };
        assert!(TrackSpec::standard(TrackName::Baseline).with_overrides(&bad).is_err());
    }

    #[test]
    fn mean_std_cases() {
        assert_eq!(mean_std(&[2.0]), (2.0, 0.0));
        let (m, s) = mean_std(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m, 2.5);
        assert!((s - (5.0f64 / 3.0).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn baseline_run() {
        let r = run_track(&TrackSpec::standard(TrackName::Baseline), None).unwrap();
        let g = &r.grid[0];
        assert_eq!(g.mean.len(), 10);
        assert!((4.5..=5.5).contains(&g.final_mean().unwrap()));
        assert!(g.mean.windows(2).all(|w| w[1] >= w[0]));
        assert!(g.violation_rate.unwrap() <= 0.10);
        assert!(g.margin.unwrap() >= 1.0);
    }

    /// Fails on question marks, so corpus embedding works but queries do not.
    struct NoQuestions(HashedEmbedder);

    impl Embedder for NoQuestions {
        fn descriptor(&self) -> ProviderDescriptor {
            self.0.descriptor()
        }
        fn embed(&self, text: &str) -> Result<EmbeddingVector, EmbedError> {
            if text.contains('?') {
                Err(EmbedError::Transport("refused".into()))
            } else {
                self.0.embed(text)
            }
        }
    }

    #[test]
    fn failing_point_is_recorded() {
        let mut spec = TrackSpec::standard(TrackName::Baseline);
        spec.grid[0].config.mode = Mode::Text;
        spec.chains = 2;
        spec.grid.push(GridPoint {
            config_id: "ok".into(),
            config: ChainConfig::default(),
        });
        let data = ToolData::generated(1, 1, Arc::new(NoQuestions(HashedEmbedder::default()))).unwrap();
        let r = run_track(&spec, Some(&data)).unwrap();
        let err = r.grid[0].error.as_deref().unwrap();
        assert!(err.contains("failed at step"), "{err}");
        assert!(r.grid[0].mean.is_empty());
        assert!(r.grid[1].error.is_none());
        assert_eq!(r.grid[1].mean.len(), 10);
    }
}
