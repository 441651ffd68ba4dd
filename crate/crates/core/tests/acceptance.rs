//! Acceptance criteria. Prints one line per criterion and exits nonzero if
//! any fails.

mod common;

use std::fs;
use std::io::Cursor;
use std::process::ExitCode;
use std::time::Instant;

use common::{corpus, embedder, jaccard_oracle, l2, swap_synonyms, swappable, SURFACES};
use mcp_fidelity::bounds::{azuma_deviation, effective_horizon, gamma_hat, gamma_star, DependencyParams};
use mcp_fidelity::chain::ChainConfig;
use mcp_fidelity::diagnostics::{autocorrelation, fit_beta};
use mcp_fidelity::embeddings::Embedder;
use mcp_fidelity::experiments::{run_chains, run_track, write_artifacts, TrackName, TrackResult, TrackSpec};
use mcp_fidelity::mcp::server::serve_stream;
use mcp_fidelity::mcp::{standard_registry, Dispatcher, ToolData};
use mcp_fidelity::metric::{extract_facts, hybrid_distortion, weighted_jaccard, FactSet};
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

type Outcome = Result<String, String>;

fn ensure(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn closed_form() -> Outcome {
    let p = DependencyParams::default();
    let mut bad = Vec::new();
    let mut parts = Vec::new();
    for (t, want) in [(10, 0.096), (30, 0.032), (60, 0.016)] {
        let g = gamma_hat(&p, t).map_err(|e| e.to_string())?;
        parts.push(format!("gamma_hat({t})={g:.4}"));
        if (g - want).abs() > 5e-4 {
            bad.push(t);
        }
    }
    let gs = gamma_star(&p).map_err(|e| e.to_string())?;
    let h = effective_horizon(0.7, 0.05).map_err(|e| e.to_string())?;
    parts.push(format!("gamma_star={gs:.3} horizon={h}"));
    ensure(bad.is_empty() && (gs - 17.78).abs() <= 0.05 && h == 9, parts.join(" "))
}

fn monte_carlo_soundness() -> Outcome {
    let c = ChainConfig {
        horizon: 30,
        beta: 0.7,
        noise_sigma: 0.05,
        base_rate: 0.5,
        ..ChainConfig::default()
    };
    let finals: Vec<f64> = run_chains(&c, 10_000, None)
        .map_err(|e| e.to_string())?
        .iter()
        .map(|t| t.final_cumulative())
        .collect();
    let mean = finals.iter().sum::<f64>() / finals.len() as f64;
    let dev = azuma_deviation(30, gamma_star(&DependencyParams::default()).unwrap(), 0.05).unwrap();
    let rate = finals.iter().filter(|&&d| d - mean >= dev).count() as f64 / finals.len() as f64;
    let max_dev = finals.iter().map(|d| d - mean).fold(f64::MIN, f64::max);
    ensure(
        rate <= 0.06,
        format!("rate={rate:.4} deviation={dev:.2} max excess={max_dev:.3} mean D(30)={mean:.3}"),
    )
}

fn per_step_rate(horizon: usize) -> Result<f64, String> {
    let c = ChainConfig {
        horizon,
        beta: 0.7,
        lambda: 0.5,
        ..ChainConfig::default()
    };
    let traces = run_chains(&c, 1000, None).map_err(|e| e.to_string())?;
    Ok(traces.iter().map(|t| t.final_cumulative()).sum::<f64>() / traces.len() as f64 / horizon as f64)
}

fn linear_growth() -> Outcome {
    let (r10, r60) = (per_step_rate(10)?, per_step_rate(60)?);
    let diff = (r10 - r60).abs() / r10;
    ensure(
        diff < 0.10,
        format!("rate(10)={r10:.4} rate(60)={r60:.4} relative diff={:.2}%", diff * 100.0),
    )
}

fn lambda_sweep() -> Outcome {
    let r = run_track(&TrackSpec::standard(TrackName::LambdaSweep), None).map_err(|e| e.to_string())?;
    let final_at = |lambda: f64| {
        r.grid
            .iter()
            .find(|g| g.config.lambda == lambda)
            .and_then(|g| g.final_mean())
            .ok_or_else(|| format!("no finished grid point at lambda {lambda}"))
    };
    let (d0, d1) = (final_at(0.0)?, final_at(1.0)?);
    let reduction = 1.0 - d1 / d0;
    ensure(
        (reduction - 0.80).abs() <= 0.05,
        format!(
            "D(30) lambda=0: {d0:.3}, lambda=1: {d1:.3}, reduction={:.1}%",
            reduction * 100.0
        ),
    )
}

fn beta_recovery() -> Outcome {
    let mut parts = Vec::new();
    let mut ok = true;
    for beta in [0.5, 0.7, 0.9] {
        let c = ChainConfig {
            horizon: 60,
            beta,
            ..ChainConfig::default()
        };
        let traces = run_chains(&c, 200, None).map_err(|e| e.to_string())?;
        let est = autocorrelation(&traces, 10).map_err(|e| e.to_string())?;
        let b = fit_beta(&est).map_err(|e| e.to_string())?;
        ok &= (b - beta).abs() <= 0.05;
        parts.push(format!("beta={beta}: fit {b:.3}"));
    }
    ensure(ok, parts.join(", "))
}

fn violation_rates(results: &[TrackResult]) -> Outcome {
    let mut parts = Vec::new();
    let mut ok = true;
    let mut checked = 0;
    for r in results {
        for g in &r.grid {
            if let Some(e) = &g.error {
                ok = false;
                parts.push(format!("{}/{} failed: {e}", r.spec.name, g.config_id));
                continue;
            }
            if !g.in_assumptions {
                parts.push(format!("{}/{} outside assumptions", r.spec.name, g.config_id));
                continue;
            }
            let v = g.violation_rate.unwrap_or(1.0);
            checked += 1;
            if v > 0.10 {
                ok = false;
                parts.push(format!("{}/{} rate {v:.3}", r.spec.name, g.config_id));
            }
        }
    }
    let worst = results
        .iter()
        .flat_map(|r| &r.grid)
        .filter(|g| g.in_assumptions)
        .filter_map(|g| g.violation_rate)
        .fold(0.0, f64::max);
    parts.insert(0, format!("{checked} grid points, worst rate {worst:.3}"));
    ensure(ok && checked > 0, parts.join("; "))
}

fn random_text(rng: &mut ChaCha8Rng) -> String {
    match rng.random_range(0..5) {
        0 => String::new(),
        1 => (0..rng.random_range(1..30))
            .map(|_| *b"abenot 1,".choose(rng).unwrap() as char)
            .collect(),
        _ => (0..rng.random_range(1..4))
            .map(|_| corpus().choose(rng).unwrap().as_str())
            .collect::<Vec<_>>()
            .join(" "),
    }
}

fn random_facts(rng: &mut ChaCha8Rng) -> Vec<(String, f64)> {
    let n = rng.random_range(0..=6);
    let mut names: Vec<&str> = SURFACES.to_vec();
    names.sort_by_key(|_| rng.random::<u32>());
    names
        .into_iter()
        .take(n)
        .map(|s| {
            (
                s.to_owned(),
                if rng.random_bool(0.1) { 0.0 } else { rng.random::<f64>() },
            )
        })
        .collect()
}

fn metric_suite() -> Outcome {
    const CASES: usize = 1000;
    let mut rng = ChaCha8Rng::seed_from_u64(0xACCE);
    let mut failures: Vec<String> = Vec::new();
    let mut fail = |name: &str, detail: String| {
        if failures.len() < 5 {
            failures.push(format!("{name}: {detail}"));
        }
    };
    let (mut n_bound, mut n_conv, mut n_sym, mut n_sens, mut n_cont, mut n_oracle) = (0, 0, 0, 0, 0, 0);
    for _ in 0..CASES {
        let (r, o) = (random_text(&mut rng), random_text(&mut rng));
        let lambda: f64 = rng.random();
        let b = hybrid_distortion(&r, &o, lambda, embedder()).map_err(|e| e.to_string())?;
        if [b.d_set, b.d_emb, b.d_sem].iter().all(|v| (0.0..=1.0).contains(v)) {
            n_bound += 1;
        } else {
            fail("boundedness", format!("{b:?}"));
        }
        if b.d_sem >= b.d_set.min(b.d_emb) - 1e-12 && b.d_sem <= b.d_set.max(b.d_emb) + 1e-12 {
            n_conv += 1;
        } else {
            fail("convexity", format!("{b:?}"));
        }

        let (fa, fb) = (random_facts(&mut rng), random_facts(&mut rng));
        let (sa, sb) = (
            FactSet::from_weights(fa.iter().cloned()).unwrap(),
            FactSet::from_weights(fb.iter().cloned()).unwrap(),
        );
        let (ab, ba) = (weighted_jaccard(&sa, &sb), weighted_jaccard(&sb, &sa));
        let (ta, tb) = (extract_facts(&r), extract_facts(&o));
        if (ab - ba).abs() < 1e-12 && (weighted_jaccard(&ta, &tb) - weighted_jaccard(&tb, &ta)).abs() < 1e-12 {
            n_sym += 1;
        } else {
            fail("symmetry", format!("{ab} vs {ba}"));
        }
        let want = jaccard_oracle(&fa, &fb);
        if (ab - want).abs() <= 1e-12 {
            n_oracle += 1;
        } else {
            fail("oracle", format!("{ab} vs {want}"));
        }

        let s = swappable().choose(&mut rng).unwrap();
        let s2 = swap_synonyms(s);
        let lam = rng.random_range(0.01..=1.0);
        let same = hybrid_distortion(s, s, lam, embedder()).map_err(|e| e.to_string())?;
        let para = hybrid_distortion(s, &s2, lam, embedder()).map_err(|e| e.to_string())?;
        let facts_equal = extract_facts(s).approx_eq(&extract_facts(&s2), 1e-12);
        if facts_equal && same.d_set == para.d_set && para.d_emb > same.d_emb && para.d_sem > same.d_sem {
            n_sens += 1;
        } else {
            fail("sensitivity", s.clone());
        }

        let (e1, e2) = (embedder().embed(s).unwrap(), embedder().embed(&s2).unwrap());
        let (a1, a2) = (
            hybrid_distortion(&r, s, lambda, embedder()).map_err(|e| e.to_string())?,
            hybrid_distortion(&r, &s2, lambda, embedder()).map_err(|e| e.to_string())?,
        );
        let bound = lambda / 2.0 * l2(e1.as_slice(), e2.as_slice());
        if facts_equal && (a1.d_sem - a2.d_sem).abs() <= bound + 1e-12 {
            n_cont += 1;
        } else {
            fail("continuity", format!("{} > {bound}", (a1.d_sem - a2.d_sem).abs()));
        }
    }
    let detail = format!(
        "boundedness {n_bound}/{CASES}, convexity {n_conv}/{CASES}, symmetry {n_sym}/{CASES}, \
         sensitivity {n_sens}/{CASES}, continuity {n_cont}/{CASES}, oracle {n_oracle}/{CASES}"
    );
    let all = [n_bound, n_conv, n_sym, n_sens, n_cont, n_oracle]
        .iter()
        .all(|&n| n == CASES);
    if all {
        Ok(detail)
    } else {
        Err(format!("{detail}; {}", failures.join("; ")))
    }
}

const PRICE_REQUEST: &str = r#"{"jsonrpc": "2.0", "method": "get_stock_price", "params": {"symbol": "AAPL"}, "id": 1, "context": {"session_id": "abc123"}}"#;

fn protocol() -> Outcome {
    let answer = || {
        let d = Dispatcher::new(standard_registry(&ToolData::bundled()));
        let mut out = Vec::new();
        let input = format!("{PRICE_REQUEST}\n{{\"jsonrpc\": \"2.0\", broken\n{PRICE_REQUEST}\n");
        serve_stream(&d, Cursor::new(input), &mut out).map_err(|e| e.to_string())?;
        String::from_utf8(out).map_err(|e| e.to_string())
    };
    let (first, second) = (answer()?, answer()?);
    let lines: Vec<Value> = first
        .lines()
        .map(serde_json::from_str)
        .collect::<Result<_, _>>()
        .map_err(|e| e.to_string())?;
    if lines.len() != 3 {
        return Err(format!("expected 3 responses, got {}", lines.len()));
    }
    let r = &lines[0];
    let ok = r["id"] == 1
        && r["result"].get("price").is_some_and(Value::is_number)
        && r["uncertainty"] == 0.01
        && lines[1]["error"]["code"] == -32700
        && lines[2] == lines[0]
        && first == second;
    ensure(
        ok,
        format!(
            "response {}, malformed -> {}, byte-stable {}",
            first.lines().next().unwrap_or_default(),
            lines[1]["error"]["code"],
            first == second
        ),
    )
}

fn determinism(dirs: &[std::path::PathBuf; 2]) -> Outcome {
    let mut checked = Vec::new();
    for name in TrackName::ALL {
        for f in ["traces.jsonl", "summary.json"] {
            let path = |root: &std::path::Path| root.join("results_bundled").join(name.as_str()).join(f);
            let (a, b) = (fs::read(path(&dirs[0])), fs::read(path(&dirs[1])));
            match (a, b) {
                (Ok(a), Ok(b)) if a == b => {}
                (Ok(_), Ok(_)) => return Err(format!("{name}/{f} differs between runs")),
                (a, b) => return Err(format!("{name}/{f} missing: {:?} {:?}", a.err(), b.err())),
            }
        }
        checked.push(name.as_str());
    }
    Ok(format!(
        "traces.jsonl and summary.json identical for {}",
        checked.join(", ")
    ))
}

fn run_all_tracks(root: &std::path::Path) -> Result<Vec<TrackResult>, String> {
    TrackName::ALL
        .iter()
        .map(|&n| {
            let r = run_track(&TrackSpec::standard(n), None).map_err(|e| e.to_string())?;
            write_artifacts(&r, root, false).map_err(|e| e.to_string())?;
            Ok(r)
        })
        .collect()
}

fn report(index: usize, name: &str, started: Instant, outcome: &Outcome) -> bool {
    let secs = started.elapsed().as_secs_f64();
    match outcome {
        Ok(d) => println!("PASS [{index}] {name} ({secs:.1}s): {d}"),
        Err(d) => println!("FAIL [{index}] {name} ({secs:.1}s): {d}"),
    }
    outcome.is_ok()
}

fn main() -> ExitCode {
    let mut all = true;
    type Check = (&'static str, fn() -> Outcome);
    let checks: [Check; 5] = [
        ("closed-form regression", closed_form),
        ("Monte Carlo soundness", monte_carlo_soundness),
        ("linear growth", linear_growth),
        ("lambda sweep reduction", lambda_sweep),
        ("diagnostics recovery", beta_recovery),
    ];
    for (i, (name, f)) in checks.iter().enumerate() {
        let t = Instant::now();
        all &= report(i + 1, name, t, &f());
    }

    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    let t = Instant::now();
    let runs = run_all_tracks(dirs[0].path()).and_then(|r| run_all_tracks(dirs[1].path()).map(|_| r));
    let violations = runs.as_ref().map_err(Clone::clone).and_then(|r| violation_rates(r));
    all &= report(6, "envelope violation rates", t, &violations);

    let t = Instant::now();
    all &= report(7, "metric property suite", t, &metric_suite());
    let t = Instant::now();
    all &= report(8, "protocol conformance", t, &protocol());
    let t = Instant::now();
    let det = match &runs {
        Ok(_) => determinism(&[dirs[0].path().to_path_buf(), dirs[1].path().to_path_buf()]),
        Err(e) => Err(e.clone()),
    };
    all &= report(9, "determinism", t, &det);

    if all {
        println!("all acceptance criteria passed");
        ExitCode::SUCCESS
    } else {
        println!("acceptance criteria failed");
        ExitCode::FAILURE
    }
}
