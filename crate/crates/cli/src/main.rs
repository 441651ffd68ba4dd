//! `mcp-fidelity` command-line entry point.

mod config;

use std::collections::BTreeMap;
use std::fs;
use std::io::{self, BufReader, Write};
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use mcp_fidelity::bounds::{self, DependencyParams};
use mcp_fidelity::chain::{read_traces_jsonl, ChainTrace, Mode};
use mcp_fidelity::diagnostics::{assumption_checks, autocorrelation, fit_beta, DEFAULT_MAX_LAG};
use mcp_fidelity::embeddings::{write_matrix, Embedder, DEFAULT_DIM, DEFAULT_SEED};
use mcp_fidelity::experiments::{run_track, write_artifacts, TrackName, TrackOverrides, TrackSpec};
use mcp_fidelity::mcp::corpus::{generate_corpus, save_corpus, DEFAULT_CORPUS_SEED};
use mcp_fidelity::mcp::market::{generate_snapshot, DEFAULT_MARKET_SEED};
use mcp_fidelity::mcp::server::{serve_listener, serve_stdio};
use mcp_fidelity::mcp::{standard_registry, Dispatcher, JsonlLog, KnowledgeBase};
use mcp_fidelity::metric::hybrid_distortion;
use serde_json::{json, Value};

use config::{load_tool_data, DataPaths, ProviderConfig, RunConfig};

/// Marks failures caused by user input (exit code 1).
#[derive(Debug)]
pub struct InputError(pub String);

impl std::fmt::Display for InputError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for InputError {}

fn input(msg: impl Into<String>) -> anyhow::Error {
    InputError(msg.into()).into()
}

#[derive(Debug, Parser)]
#[command(
    name = "mcp-fidelity",
    version,
    about = "Semantic distortion measurement and concentration envelopes for tool-call chains"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Measure the hybrid distortion of an observed text against a reference.
    Measure(MeasureArgs),
    /// Closed-form bound quantities for dependency parameters.
    Bounds(BoundsArgs),
    /// Effective information horizon.
    Horizon(HorizonArgs),
    /// Run an experiment track and write its artifacts.
    ///
    /// Settings resolve as: command-line flags, then the config file, then
    /// the track's built-in defaults.
    Run(RunArgs),
    /// Autocorrelation fit and assumption checks over recorded traces.
    Diagnose(DiagnoseArgs),
    /// Serve the standard tools over JSON-RPC.
    Serve(ServeArgs),
    /// Write the generated corpus, market snapshots, and corpus embeddings.
    GenData(GenDataArgs),
}

#[derive(Debug, Clone, Args)]
struct EmbedderArgs {
    /// Embedding provider.
    #[arg(long, value_parser = ["hashed", "external"], default_value = "hashed")]
    embedder: String,
    /// Endpoint of the external embedding service.
    #[arg(long)]
    endpoint: Option<String>,
    /// Embedding dimension.
    #[arg(long, default_value_t = DEFAULT_DIM)]
    dim: usize,
    /// Hash seed of the bundled embedder.
    #[arg(long, default_value_t = DEFAULT_SEED)]
    embed_seed: u64,
    /// Request timeout of the external provider in milliseconds.
    #[arg(long, default_value_t = 10_000)]
    timeout_ms: u64,
}

impl EmbedderArgs {
    fn provider(&self) -> anyhow::Result<ProviderConfig> {
        match self.embedder.as_str() {
            "external" => Ok(ProviderConfig::External {
                endpoint: self
                    .endpoint
                    .clone()
                    .ok_or_else(|| input("--endpoint is required with --embedder external"))?,
                dim: self.dim,
                timeout_ms: self.timeout_ms,
            }),
            _ => Ok(ProviderConfig::Hashed {
                dim: self.dim,
                seed: self.embed_seed,
            }),
        }
    }
}

#[derive(Debug, Args)]
struct MeasureArgs {
    /// Reference text file.
    reference: String,
    /// Observed text file.
    observed: String,
    /// Weight of the embedding component.
    #[arg(long, default_value_t = 0.5)]
    lambda: f64,
    /// Treat the positional arguments as literal text instead of paths.
    #[arg(long)]
    inline: bool,
    #[command(flatten)]
    embed: EmbedderArgs,
}

#[derive(Debug, Args)]
struct BoundsArgs {
    #[arg(long, default_value_t = 1.0)]
    alpha: f64,
    #[arg(long, default_value_t = 0.7)]
    beta: f64,
    /// Branching factor.
    #[arg(long = "B", default_value_t = 1)]
    branching: u32,
    /// Re-grounding interval.
    #[arg(long)]
    m: Option<u32>,
    /// Horizon.
    #[arg(long = "T", default_value_t = 10)]
    horizon: usize,
    /// Failure probability of the deviation bound.
    #[arg(long, default_value_t = 0.05)]
    eta: f64,
    #[arg(long, default_value_t = 1.0)]
    delta_max: f64,
    /// Residual influence threshold for the effective horizon.
    #[arg(long, default_value_t = 0.05)]
    epsilon: f64,
}

#[derive(Debug, Args)]
struct HorizonArgs {
    #[arg(long)]
    beta: f64,
    #[arg(long)]
    epsilon: f64,
}

#[derive(Debug, Args)]
struct RunArgs {
    /// Track name: baseline, lambda_sweep, long_chain, high_beta, noise.
    #[arg(long)]
    track: Option<TrackName>,
    /// JSON config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output root; artifacts go to <out>/results_<responder>/<track>/.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    chains: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Envelope confidence parameter.
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long, value_parser = parse_mode)]
    mode: Option<Mode>,
    /// Count a violation at any step instead of the final step.
    #[arg(long)]
    any_step: bool,
    /// Record wall-clock runtime in summary.json.
    #[arg(long)]
    record_runtime: bool,
    #[arg(long)]
    corpus: Option<PathBuf>,
    #[arg(long)]
    snapshots: Option<PathBuf>,
}

fn parse_mode(s: &str) -> Result<Mode, String> {
    serde_json::from_value(Value::String(s.to_owned()))
        .map_err(|_| format!("unknown mode {s:?}; expected score or text"))
}

#[derive(Debug, Args)]
struct DiagnoseArgs {
    /// A traces.jsonl file or a directory searched for them.
    #[arg(long)]
    traces: PathBuf,
    #[arg(long, default_value_t = DEFAULT_MAX_LAG)]
    max_lag: usize,
}

#[derive(Debug, Args)]
struct ServeArgs {
    #[arg(long, conflicts_with = "tcp", required_unless_present = "tcp")]
    stdio: bool,
    /// Address to listen on, e.g. 127.0.0.1:7400 (port 0 picks a free port).
    #[arg(long)]
    tcp: Option<String>,
    #[arg(long)]
    corpus: Option<PathBuf>,
    #[arg(long)]
    snapshots: Option<PathBuf>,
    /// Append tool call records to this JSONL file.
    #[arg(long)]
    log: Option<PathBuf>,
    /// Seed of generated data when no files are given.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Args)]
struct GenDataArgs {
    #[arg(long)]
    out: PathBuf,
    /// Seed of both the corpus and the market snapshot.
    #[arg(long)]
    seed: Option<u64>,
    #[command(flatten)]
    embed: EmbedderArgs,
}

fn emit(value: &Value) -> anyhow::Result<()> {
    let mut out = io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, value)?;
    out.write_all(b"\n")?;
    out.flush()?;
    Ok(())
}

fn read_text(arg: &str, inline: bool) -> anyhow::Result<String> {
    if inline {
        return Ok(arg.to_owned());
    }
    fs::read_to_string(arg).map_err(|e| input(format!("cannot read {arg}: {e}")))
}

fn measure(args: MeasureArgs) -> anyhow::Result<()> {
    if !(0.0..=1.0).contains(&args.lambda) {
        bail!(input(format!("--lambda {} is outside [0, 1]", args.lambda)));
    }
    let reference = read_text(&args.reference, args.inline)?;
    let observed = read_text(&args.observed, args.inline)?;
    let embedder = args.embed.provider()?.build()?;
    let b = hybrid_distortion(&reference, &observed, args.lambda, embedder.as_ref())?;
    emit(&serde_json::to_value(b)?)
}

fn bounds_err(e: bounds::BoundsError) -> anyhow::Error {
    input(e.to_string())
}

fn bounds_cmd(args: BoundsArgs) -> anyhow::Result<()> {
    let mut params = DependencyParams::new(args.alpha, args.beta, args.branching)
        .and_then(|p| p.with_delta_max(args.delta_max))
        .map_err(bounds_err)?;
    if let Some(m) = args.m {
        params = params.with_reground(m).map_err(bounds_err)?;
    }
    if args.horizon == 0 {
        bail!(input("--T must be positive"));
    }
    let c_star = bounds::c_star(&params).map_err(bounds_err)?;
    let gamma_star = bounds::gamma_star(&params).map_err(bounds_err)?;
    let gamma_hat = bounds::gamma_hat(&params, args.horizon).map_err(bounds_err)?;
    let deviation = bounds::azuma_deviation(args.horizon, gamma_hat, args.eta).map_err(bounds_err)?;
    let deviation_worst = bounds::azuma_deviation(args.horizon, gamma_star, args.eta).map_err(bounds_err)?;
    let horizon = bounds::effective_horizon(args.beta, args.epsilon).map_err(bounds_err)?;
    emit(&json!({
        "alpha": params.alpha,
        "beta": params.beta,
        "B": params.branching,
        "m": params.reground_interval,
        "delta_max": params.delta_max,
        "T": args.horizon,
        "eta": args.eta,
        "epsilon": args.epsilon,
        "c_star": c_star,
        "gamma_star": gamma_star,
        "gamma_hat": gamma_hat,
        "deviation": deviation,
        "deviation_worst_case": deviation_worst,
        "horizon": horizon,
    }))
}

fn horizon_cmd(args: HorizonArgs) -> anyhow::Result<()> {
    let h = bounds::effective_horizon(args.beta, args.epsilon).map_err(bounds_err)?;
    emit(&json!(h))
}

fn run_cmd(args: RunArgs) -> anyhow::Result<()> {
    let cfg = match &args.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    let track = args
        .track
        .or(cfg.track)
        .ok_or_else(|| input("a track is required (--track or \"track\" in the config)"))?;
    let mut overrides: TrackOverrides = cfg.overrides.clone();
    overrides.chains = args.chains.or(overrides.chains);
    overrides.seed = args.seed.or(overrides.seed);
    overrides.delta = args.delta.or(overrides.delta);
    overrides.mode = args.mode.or(overrides.mode);
    if args.any_step {
        overrides.violation_mode = Some(bounds::ViolationMode::AnyStep);
    }
    let spec = TrackSpec::standard(track)
        .with_overrides(&overrides)
        .map_err(|e| input(e.to_string()))?;
    for p in &spec.grid {
        p.config.validate().map_err(|e| input(e.to_string()))?;
    }

    let paths = DataPaths {
        corpus: args.corpus.or(cfg.data.corpus.clone()),
        snapshots: args.snapshots.or(cfg.data.snapshots.clone()),
        embeddings: cfg.data.embeddings.clone(),
    };
    let data = if spec.needs_text() {
        let embedder = cfg.provider.clone().unwrap_or_default().build()?;
        Some(load_tool_data(&paths, embedder, None)?)
    } else {
        None
    };

    let result = run_track(&spec, data.as_ref()).context("track run failed")?;
    let root = args.out.or(cfg.output_dir).unwrap_or_else(|| PathBuf::from("."));
    let record_runtime = args.record_runtime || cfg.record_runtime.unwrap_or(false);
    let dir = write_artifacts(&result, &root, record_runtime).context("cannot write artifacts")?;
    let failed: Vec<&str> = result
        .grid
        .iter()
        .filter(|g| g.error.is_some())
        .map(|g| g.config_id.as_str())
        .collect();
    emit(&json!({
        "track": track.as_str(),
        "output_dir": dir.display().to_string(),
        "configs": result.grid.iter().map(|g| json!({
            "config_id": g.config_id,
            "mean_final": g.final_mean(),
            "upper_final": g.envelope.as_ref().map(|e| e.final_upper()),
            "violation_rate": g.violation_rate,
            "beta_hat": g.beta_hat,
            "error": g.error,
        })).collect::<Vec<_>>(),
    }))?;
    if !failed.is_empty() {
        bail!("grid points failed: {}", failed.join(", "));
    }
    Ok(())
}

fn find_trace_files(path: &Path) -> anyhow::Result<Vec<PathBuf>> {
    if path.is_file() {
        return Ok(vec![path.to_path_buf()]);
    }
    if !path.is_dir() {
        bail!(input(format!("{} does not exist", path.display())));
    }
    let mut found = Vec::new();
    let mut stack = vec![path.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in fs::read_dir(&dir)? {
            let p = entry?.path();
            if p.is_dir() {
                stack.push(p);
            } else if p.file_name().is_some_and(|n| n == "traces.jsonl") {
                found.push(p);
            }
        }
    }
    found.sort();
    if found.is_empty() {
        bail!(input(format!("no traces.jsonl under {}", path.display())));
    }
    Ok(found)
}

fn diagnose(args: DiagnoseArgs) -> anyhow::Result<()> {
    let files = find_trace_files(&args.traces)?;
    let embedder: Arc<dyn Embedder> = ProviderConfig::default().build()?;
    let mut reports = Vec::new();
    for file in files {
        let f = fs::File::open(&file).map_err(|e| input(format!("cannot open {}: {e}", file.display())))?;
        let traces = read_traces_jsonl(BufReader::new(f))
            .map_err(|e| input(format!("invalid traces in {}: {e}", file.display())))?;
        let mut groups: BTreeMap<String, Vec<ChainTrace>> = BTreeMap::new();
        for (id, tr) in traces {
            groups.entry(id).or_default().push(tr);
        }
        for (config_id, group) in groups {
            let c = &group[0].config;
            let params = DependencyParams {
                alpha: 1.0,
                beta: c.beta,
                branching: c.branching,
                reground_interval: c.reground_interval,
                delta_max: 1.0,
            };
            let min_steps = group.iter().map(|t| t.steps.len()).min().unwrap_or(0);
            let lag = args.max_lag.min(min_steps.saturating_sub(1));
            let (autocorr, beta_hat, fit_error) = match autocorrelation(&group, lag) {
                Ok(est) => match fit_beta(&est) {
                    Ok(b) => (Some(est), Some(b), None),
                    Err(e) => (Some(est), None, Some(e.to_string())),
                },
                Err(e) => (None, None, Some(e.to_string())),
            };
            let report = assumption_checks(&params, &group, embedder.as_ref());
            reports.push(json!({
                "file": file.display().to_string(),
                "config_id": config_id,
                "chains": group.len(),
                "beta": c.beta,
                "beta_hat": beta_hat,
                "autocorrelation": autocorr,
                "fit_error": fit_error,
                "assumptions": report,
            }));
        }
    }
    emit(&json!({ "reports": reports }))
}

fn serve(args: ServeArgs) -> anyhow::Result<()> {
    let paths = DataPaths {
        corpus: args.corpus,
        snapshots: args.snapshots,
        embeddings: None,
    };
    let data = load_tool_data(&paths, ProviderConfig::default().build()?, args.seed)?;
    let mut dispatcher = Dispatcher::new(standard_registry(&data));
    if let Some(p) = &args.log {
        let sink = JsonlLog::append_to(p).map_err(|e| input(format!("cannot open log {}: {e}", p.display())))?;
        dispatcher = dispatcher.with_sink(Arc::new(sink));
    }
    if args.stdio {
        log::info!("serving on stdio");
        serve_stdio(&dispatcher)?;
        return Ok(());
    }
    let addr = args.tcp.expect("clap enforces a transport");
    let listener = TcpListener::bind(&addr).map_err(|e| input(format!("cannot listen on {addr}: {e}")))?;
    emit(&json!({ "listening": listener.local_addr()?.to_string() }))?;
    serve_listener(listener, Arc::new(dispatcher))?;
    Ok(())
}

fn gen_data(args: GenDataArgs) -> anyhow::Result<()> {
    fs::create_dir_all(&args.out).map_err(|e| input(format!("cannot create {}: {e}", args.out.display())))?;
    let corpus = generate_corpus(args.seed.unwrap_or(DEFAULT_CORPUS_SEED));
    let market = generate_snapshot(args.seed.unwrap_or(DEFAULT_MARKET_SEED));
    let corpus_path = args.out.join("knowledge_corpus.jsonl");
    let market_path = args.out.join("market_snapshots.json");
    let matrix_path = args.out.join("knowledge_embeddings.bin");
    save_corpus(&corpus_path, &corpus)?;
    market.save(&market_path)?;
    let n = corpus.len();
    let kb = KnowledgeBase::new(corpus, args.embed.provider()?.build()?)?;
    write_matrix(&matrix_path, kb.matrix())?;
    emit(&json!({
        "corpus": corpus_path.display().to_string(),
        "entries": n,
        "snapshots": market_path.display().to_string(),
        "symbols": market.symbols().count(),
        "embeddings": matrix_path.display().to_string(),
        "dim": kb.embedder().descriptor().dim,
    }))
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Measure(a) => measure(a),
        Command::Bounds(a) => bounds_cmd(a),
        Command::Horizon(a) => horizon_cmd(a),
        Command::Run(a) => run_cmd(a),
        Command::Diagnose(a) => diagnose(a),
        Command::Serve(a) => serve(a),
        Command::GenData(a) => gen_data(a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .target(env_logger::Target::Stderr)
        .init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.chain().any(|c| c.is::<InputError>()) {
                ExitCode::from(1)
            } else {
                ExitCode::from(2)
            }
        }
    }
}
