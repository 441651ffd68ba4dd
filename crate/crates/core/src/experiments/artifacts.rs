//! Result files of a track run.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde_json::{json, Value};

use super::{ExperimentError, GridResult, TrackResult};

pub const PLOT_HEADER: [&str; 11] = [
    "t",
    "mean",
    "std",
    "envelope_expected",
    "envelope_upper",
    "config_id",
    "horizon",
    "beta",
    "lambda",
    "tool_noise",
    "mode",
];

/// Rounds to `digits` significant digits.
pub fn round_sig(x: f64, digits: usize) -> f64 {
    if x == 0.0 || !x.is_finite() || digits == 0 {
        return x;
    }
    format!("{:.*e}", digits - 1, x).parse().unwrap_or(x)
}

fn r4(x: Option<f64>) -> Value {
    x.map_or(Value::Null, |v| json!(round_sig(v, 4)))
}

fn summary_entry(g: &GridResult) -> Value {
    json!({
        "config_id": g.config_id,
        "config": g.config,
        "chains": g.chains,
        "r_hat": r4(g.r_hat),
        "beta_hat": g.beta_hat,
        "gamma_hat": r4(g.gamma_hat),
        "margin": r4(g.margin),
        "violation_rate": r4(g.violation_rate),
        "mean_final": r4(g.final_mean()),
        "upper_final": r4(g.envelope.as_ref().map(|e| e.final_upper())),
        "in_assumptions": g.in_assumptions,
        "notes": g.notes,
        "error": g.error,
    })
}

/// The summary document. `runtime_s` is null unless `record_runtime` is set,
/// which keeps repeated runs byte-identical.
pub fn summary_json(result: &TrackResult, record_runtime: bool) -> Value {
    json!({
        "track": result.spec.name,
        "responder": result.spec.responder().label(),
        "seed": result.spec.seed,
        "delta": result.spec.delta,
        "violation_mode": result.spec.violation_mode,
        "chains": result.spec.chains,
        "configs": result.grid.iter().map(summary_entry).collect::<Vec<_>>(),
        "runtime_s": record_runtime.then(|| round_sig(result.runtime_s, 4)),
    })
}

/// Writes one row per step and configuration, or only the header when the
/// result holds no finished grid point.
pub fn emit_plot_data(result: &TrackResult, path: &Path) -> Result<(), ExperimentError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(PLOT_HEADER)?;
    for g in &result.grid {
        let Some(env) = &g.envelope else { continue };
        let c = &g.config;
        let mode = serde_json::to_value(c.mode)?;
        for t in 0..g.mean.len() {
            w.write_record([
                (t + 1).to_string(),
                g.mean[t].to_string(),
                g.std[t].to_string(),
                env.expected[t].to_string(),
                env.upper[t].to_string(),
                g.config_id.clone(),
                c.horizon.to_string(),
                c.beta.to_string(),
                c.lambda.to_string(),
                c.tool_noise.to_string(),
                mode.as_str().unwrap_or_default().to_owned(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Writes all artifacts under `<root>/results_<responder>/<track>/` and
/// returns that directory.
pub fn write_artifacts(result: &TrackResult, root: &Path, record_runtime: bool) -> Result<PathBuf, ExperimentError> {
    let dir = root
        .join(format!("results_{}", result.spec.responder().label()))
        .join(result.spec.name.as_str());
    fs::create_dir_all(&dir)?;
    let track = result.spec.name.as_str();

    let mut traces = BufWriter::new(File::create(dir.join("traces.jsonl"))?);
    let mut calls = BufWriter::new(File::create(dir.join("tool_calls.jsonl"))?);
    for g in &result.grid {
        for tr in &g.traces {
            tr.write_jsonl(&mut traces, &g.config_id)?;
            for c in &tr.tool_calls {
                serde_json::to_writer(&mut calls, c)?;
                calls.write_all(b"\n")?;
            }
        }
    }
    traces.flush()?;
    calls.flush()?;

    let mut agg = csv::Writer::from_path(dir.join("aggregate.csv"))?;
    agg.write_record(["track", "config_id", "t", "mean", "std", "n"])?;
    let mut env = csv::Writer::from_path(dir.join("envelopes.csv"))?;
    env.write_record(["config_id", "t", "expected", "upper"])?;
    for g in &result.grid {
        for t in 0..g.mean.len() {
            agg.write_record([
                track.to_owned(),
                g.config_id.clone(),
                (t + 1).to_string(),
                g.mean[t].to_string(),
                g.std[t].to_string(),
                g.chains.to_string(),
            ])?;
        }
        if let Some(e) = &g.envelope {
            for t in 0..e.horizon {
                env.write_record([
                    g.config_id.clone(),
                    (t + 1).to_string(),
                    e.expected[t].to_string(),
                    e.upper[t].to_string(),
                ])?;
            }
        }
    }
    agg.flush()?;
    env.flush()?;

    let mut summary = serde_json::to_string_pretty(&summary_json(result, record_runtime))?;
    summary.push('\n');
    fs::write(dir.join("summary.json"), summary)?;

    emit_plot_data(result, &dir.join(format!("plot_{track}.csv")))?;
    Ok(dir)
}
