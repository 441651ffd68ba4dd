use std::fs;
use std::path::Path;

use mcp_fidelity::chain::{read_traces_jsonl, ChainConfig, Mode};
use mcp_fidelity::diagnostics::{autocorrelation, fit_beta};
use mcp_fidelity::experiments::{
    mean_std, run_chains, run_track, write_artifacts, TrackName, TrackOverrides, TrackSpec,
};

fn run_into(spec: &TrackSpec, root: &Path) -> std::path::PathBuf {
    let r = run_track(spec, None).unwrap();
    write_artifacts(&r, root, false).unwrap()
}

/// Tool call records with the wall-clock latency removed.
fn calls_without_latency(dir: &Path) -> Vec<serde_json::Value> {
    fs::read_to_string(dir.join("tool_calls.jsonl"))
        .unwrap()
        .lines()
        .map(|l| {
            let mut v: serde_json::Value = serde_json::from_str(l).unwrap();
            v.as_object_mut().unwrap().remove("latency_ms");
            v
        })
        .collect()
}

fn small(name: TrackName, chains: usize, horizon: Option<usize>) -> TrackSpec {
    let o = TrackOverrides {
        chains: Some(chains),
        horizon,
        ..TrackOverrides::default()
    };
    TrackSpec::standard(name).with_overrides(&o).unwrap()
}

#[test]
fn repeated_runs_are_byte_identical() {
    for spec in [
        small(TrackName::LongChain, 6, Some(20)),
        small(TrackName::Noise, 2, Some(4)),
    ] {
        let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        let (da, db) = (run_into(&spec, a.path()), run_into(&spec, b.path()));
        for f in [
            "traces.jsonl",
            "summary.json",
            "aggregate.csv",
            "envelopes.csv",
            &format!("plot_{}.csv", spec.name),
        ] {
            assert_eq!(
                fs::read(da.join(f)).unwrap(),
                fs::read(db.join(f)).unwrap(),
                "{} {f}",
                spec.name
            );
        }
        assert_eq!(calls_without_latency(&da), calls_without_latency(&db));
    }
}

#[test]
fn seed_changes_traces() {
    let a = small(TrackName::Baseline, 4, None);
    let b = a
        .clone()
        .with_overrides(&TrackOverrides {
            seed: Some(7),
            ..TrackOverrides::default()
        })
        .unwrap();
    let (da, db) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let (pa, pb) = (run_into(&a, da.path()), run_into(&b, db.path()));
    assert_ne!(
        fs::read(pa.join("traces.jsonl")).unwrap(),
        fs::read(pb.join("traces.jsonl")).unwrap()
    );
}

#[test]
fn traces_round_trip_through_jsonl() {
    let spec = small(TrackName::Noise, 2, Some(3));
    let dir = tempfile::tempdir().unwrap();
    let out = run_into(&spec, dir.path());
    let text = fs::read_to_string(out.join("traces.jsonl")).unwrap();
    let traces = read_traces_jsonl(text.as_bytes()).unwrap();
    assert_eq!(traces.len(), 3 * 2);
    let (id, tr) = &traces[0];
    assert_eq!(id, "noise_0.00");
    assert_eq!(tr.steps.len(), 3);
    assert!(tr
        .steps
        .iter()
        .all(|s| s.ref_text.as_deref().is_some_and(|t| !t.is_empty())));
    let calls = fs::read_to_string(out.join("tool_calls.jsonl")).unwrap();
    assert_eq!(calls.lines().count(), 3 * 2 * 3);
}

#[test]
fn deviation_grows_sublinearly() {
    let std_at = |horizon: usize| {
        let c = ChainConfig {
            horizon,
            ..ChainConfig::default()
        };
        let finals: Vec<f64> = run_chains(&c, 2000, None)
            .unwrap()
            .iter()
            .map(|t| t.final_cumulative())
            .collect();
        mean_std(&finals).1
    };
    let ratio = std_at(60) / std_at(15);
    assert!(ratio <= 2.5, "std ratio {ratio}");
}

#[test]
fn regrounding_every_step_removes_correlation() {
    let c = ChainConfig {
        horizon: 40,
        reground_interval: Some(1),
        ..ChainConfig::default()
    };
    let traces = run_chains(&c, 200, None).unwrap();
    let beta = fit_beta(&autocorrelation(&traces, 10).unwrap()).unwrap();
    assert!(beta < 0.15, "{beta}");
}

#[test]
fn text_mode_reacts_to_tool_noise() {
    let mean_final = |noise: f64| {
        let c = ChainConfig {
            horizon: 8,
            mode: Mode::Text,
            tool_noise: noise,
            ..ChainConfig::default()
        };
        let o = TrackOverrides::default();
        let spec = TrackSpec {
            grid: vec![mcp_fidelity::experiments::GridPoint {
                config_id: "x".into(),
                config: c,
            }],
            chains: 6,
            ..TrackSpec::standard(TrackName::Noise).with_overrides(&o).unwrap()
        };
        run_track(&spec, None).unwrap().grid[0].final_mean().unwrap()
    };
    assert!(mean_final(0.8) > mean_final(0.0));
}
