//! Dependence estimation from traces and runtime assumption checks.

use rand::seq::IndexedRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bounds::{DependencyParams, DistortionSeries};
use crate::chain::{chain_rng, ChainTrace};
use crate::embeddings::{cosine, Embedder, EmbeddingVector};
use crate::mcp::corpus::{generate_corpus, DEFAULT_CORPUS_SEED};
use crate::metric::extract_facts;

pub const DEFAULT_MAX_LAG: usize = 10;

#[derive(Debug, Error, PartialEq)]
pub enum DiagnosticsError {
    #[error("correlation undefined at lag {lag}: zero variance")]
    ZeroVariance { lag: usize },
    #[error("invalid input: {0}")]
    Input(String),
}

/// Pooled sample autocorrelation per lag.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AutocorrEstimate {
    pub lags: Vec<usize>,
    pub rho: Vec<f64>,
    pub n_pairs: Vec<usize>,
}

/// Pearson correlation of `(delta_t, delta_{t+k})` pooled over every chain
/// and every valid `t`, for `k = 1..=max_lag`.
pub fn autocorrelation<S: DistortionSeries>(
    traces: &[S],
    max_lag: usize,
) -> Result<AutocorrEstimate, DiagnosticsError> {
    if max_lag == 0 {
        return Err(DiagnosticsError::Input("max_lag must be >= 1".into()));
    }
    if traces.is_empty() {
        return Err(DiagnosticsError::Input("no traces".into()));
    }
    if let Some(short) = traces.iter().position(|t| t.steps() <= max_lag) {
        return Err(DiagnosticsError::Input(format!(
            "trace {short} has {} steps; lag {max_lag} needs at least {}",
            traces[short].steps(),
            max_lag + 1
        )));
    }
    let mut est = AutocorrEstimate {
        lags: Vec::with_capacity(max_lag),
        rho: Vec::with_capacity(max_lag),
        n_pairs: Vec::with_capacity(max_lag),
    };
    for k in 1..=max_lag {
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for tr in traces {
            for t in 0..tr.steps() - k {
                xs.push(tr.delta(t));
                ys.push(tr.delta(t + k));
            }
        }
        let n = xs.len() as f64;
        let mx = xs.iter().sum::<f64>() / n;
        let my = ys.iter().sum::<f64>() / n;
        let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
        for (x, y) in xs.iter().zip(&ys) {
            sxy += (x - mx) * (y - my);
            sxx += (x - mx) * (x - mx);
            syy += (y - my) * (y - my);
        }
        if sxx <= 1e-20 * n || syy <= 1e-20 * n {
            return Err(DiagnosticsError::ZeroVariance { lag: k });
        }
        est.lags.push(k);
        est.rho.push((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0));
        est.n_pairs.push(xs.len());
    }
    Ok(est)
}

/// Least-squares decay fit over the grid `0.000, 0.001, ..., 0.999`,
/// minimizing `sum_k (rho(k) - beta^k)^2`; ties go to the smaller beta.
pub fn fit_beta(est: &AutocorrEstimate) -> Result<f64, DiagnosticsError> {
    if est.lags.len() < 2 || est.rho.len() != est.lags.len() {
        return Err(DiagnosticsError::Input("need at least 2 lags to fit beta".into()));
    }
    let mut best = (f64::INFINITY, 0.0);
    for i in 0..1000 {
        let beta = f64::from(i) / 1000.0;
        let loss: f64 = est
            .lags
            .iter()
            .zip(&est.rho)
            .map(|(&k, &r)| (r - beta.powi(k as i32)).powi(2))
            .sum();
        if loss < best.0 {
            best = (loss, beta);
        }
    }
    Ok(best.1)
}

/// One named pass/fail entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssumptionReport {
    pub checks: Vec<Check>,
    pub all_passed: bool,
}

impl AssumptionReport {
    pub fn get(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }
}

fn check(name: &str, passed: bool, detail: String) -> Check {
    Check {
        name: name.into(),
        passed,
        detail,
    }
}

const REGULARITY_SAMPLES: usize = 200;

/// Runs the runtime assumption checks. Text from the traces (or a sample of
/// the bundled corpus when traces carry none) feeds the embedding and
/// fact-weight checks. Failures are report entries, never errors.
pub fn assumption_checks(
    params: &DependencyParams,
    traces: &[ChainTrace],
    embedder: &dyn Embedder,
) -> AssumptionReport {
    let mut checks = Vec::new();

    let bb = params.effective_decay();
    checks.push(check(
        "bounded_branching",
        params.reground_interval.is_some() || bb < 1.0,
        match params.reground_interval {
            Some(m) => format!("beta*B = {bb:.4}, re-grounding every {m} steps"),
            None => format!("beta*B = {bb:.4}"),
        },
    ));

    let mut bad = None;
    let mut inconsistent = None;
    'outer: for tr in traces {
        let mut total = 0.0;
        for s in &tr.steps {
            let d = s.breakdown.d_sem;
            if !(0.0..=1.0).contains(&d) {
                bad = Some(format!("chain {} step {}: delta = {d}", tr.chain_index, s.step));
                break 'outer;
            }
            total += d;
            if inconsistent.is_none() && (total - s.cumulative).abs() > 1e-9 {
                inconsistent = Some(format!("chain {} step {}", tr.chain_index, s.step));
            }
        }
    }
    let n_steps: usize = traces.iter().map(|t| t.steps.len()).sum();
    checks.push(match bad {
        Some(d) => check("bounded_distortion", false, d),
        None => check("bounded_distortion", true, format!("{n_steps} steps in [0, 1]")),
    });
    checks.push(match inconsistent {
        Some(d) => check("cumulative_consistency", false, format!("running sum mismatch at {d}")),
        None => check("cumulative_consistency", true, "running sums match".into()),
    });

    let mut texts: Vec<String> = traces
        .iter()
        .flat_map(|t| &t.steps)
        .flat_map(|s| [s.ref_text.clone(), s.obs_text.clone()])
        .flatten()
        .filter(|t| !t.trim().is_empty())
        .take(REGULARITY_SAMPLES)
        .collect();
    if texts.len() < 3 {
        texts.extend(
            generate_corpus(DEFAULT_CORPUS_SEED)
                .into_iter()
                .step_by(10)
                .map(|e| e.text),
        );
    }

    let refs: Vec<&str> = texts.iter().map(String::as_str).collect();
    let vectors: Result<Vec<EmbeddingVector>, _> = embedder.embed_batch(&refs);
    match vectors {
        Err(e) => {
            checks.push(check("embedding_unit_norm", false, format!("provider error: {e}")));
            checks.push(check("embedding_regularity", false, format!("provider error: {e}")));
        }
        Ok(vectors) => {
            let off = vectors.iter().filter(|v| !v.is_sentinel() && !v.is_unit()).count();
            checks.push(check(
                "embedding_unit_norm",
                off == 0,
                format!("{off} of {} vectors off unit norm", vectors.len()),
            ));
            checks.push(regularity_check(&vectors));
        }
    }

    let mut unnormalized = 0;
    for t in &texts {
        let facts = extract_facts(t);
        if !facts.is_empty() && (!facts.is_normalized() || (facts.total_weight() - 1.0).abs() > 1e-9) {
            unnormalized += 1;
        }
    }
    checks.push(check(
        "fact_weight_normalization",
        unnormalized == 0,
        format!("{unnormalized} of {} fact sets not normalized", texts.len()),
    ));

    let all_passed = checks.iter().all(|c| c.passed);
    AssumptionReport { checks, all_passed }
}

/// `|cos(x, a) - cos(y, a)| <= ||x - y||` on random triples of unit vectors.
fn regularity_check(vectors: &[EmbeddingVector]) -> Check {
    let units: Vec<&EmbeddingVector> = vectors.iter().filter(|v| !v.is_sentinel()).collect();
    if units.len() < 3 {
        return check("embedding_regularity", true, "fewer than 3 vectors; skipped".into());
    }
    let mut rng = chain_rng(0x5245_4755, 0);
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..REGULARITY_SAMPLES {
        let picked: Vec<&&EmbeddingVector> = units.choose_multiple(&mut rng, 3).collect();
        let (x, y, a) = (picked[0], picked[1], picked[2]);
        let (Ok(cx), Ok(cy)) = (cosine(x, a), cosine(y, a)) else {
            return check("embedding_regularity", false, "dimension mismatch".into());
        };
        let dist: f64 = x
            .as_slice()
            .iter()
            .zip(y.as_slice())
            .map(|(p, q)| (p - q) * (p - q))
            .sum::<f64>()
            .sqrt();
        worst = worst.max((cx - cy).abs() - dist);
    }
    check(
        "embedding_regularity",
        worst <= 1e-12,
        format!("max slack violation {worst:.3e} over {REGULARITY_SAMPLES} triples"),
    )
}
