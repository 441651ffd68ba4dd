//! Closed-form concentration quantities for cumulative distortion.
//!
//! With bounded-difference constant `c = 1 + C*`, where `C*` is the total
//! geometric influence one response has on all later steps, Azuma's
//! inequality bounds the deviation of `D(T)` from its mean by
//! `sqrt(2 T (1 + gamma) ln(1/eta))` with `gamma = 2 C* + C*^2`. The
//! calibrated variant swaps `gamma` for a structure-specific `gamma_hat(T)`
//! computed from the geometric decay alone.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum BoundsError {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("invalid input: {0}")]
    Input(String),
}

/// Dependency structure of a chain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DependencyParams {
    /// Response stability, in `[0, 1]`.
    pub alpha: f64,
    /// Influence decay rate, in `[0, 1)`.
    pub beta: f64,
    /// Effective branching factor, at least 1.
    pub branching: u32,
    /// Re-grounding interval, if any.
    pub reground_interval: Option<u32>,
    /// Per-step distortion cap, in `[0, 1]`.
    pub delta_max: f64,
}

impl Default for DependencyParams {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            beta: 0.7,
            branching: 1,
            reground_interval: None,
            delta_max: 1.0,
        }
    }
}

impl DependencyParams {
    pub fn new(alpha: f64, beta: f64, branching: u32) -> Result<Self, BoundsError> {
        let p = Self {
            alpha,
            beta,
            branching,
            ..Self::default()
        };
        p.validate()?;
        Ok(p)
    }

    pub fn with_reground(mut self, m: u32) -> Result<Self, BoundsError> {
        self.reground_interval = Some(m);
        self.validate()?;
        Ok(self)
    }

    pub fn with_delta_max(mut self, delta_max: f64) -> Result<Self, BoundsError> {
        self.delta_max = delta_max;
        self.validate()?;
        Ok(self)
    }

    /// `beta * B`.
    pub fn effective_decay(&self) -> f64 {
        self.beta * f64::from(self.branching)
    }

    /// Checks field ranges and the bounded-branching condition.
    pub fn validate(&self) -> Result<(), BoundsError> {
        let unit = |name: &str, v: f64| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(BoundsError::Domain(format!("{name} = {v} is outside [0, 1]")))
            }
        };
        unit("alpha", self.alpha)?;
        unit("delta_max", self.delta_max)?;
        if !(0.0..1.0).contains(&self.beta) {
            return Err(BoundsError::Domain(format!("beta = {} is outside [0, 1)", self.beta)));
        }
        if self.branching < 1 {
            return Err(BoundsError::Domain("branching factor must be >= 1".into()));
        }
        if self.reground_interval == Some(0) {
            return Err(BoundsError::Domain("re-grounding interval must be >= 1".into()));
        }
        if self.reground_interval.is_none() && self.effective_decay() >= 1.0 {
            return Err(BoundsError::Domain(format!(
                "beta * B = {} >= 1 without re-grounding",
                self.effective_decay()
            )));
        }
        Ok(())
    }

    /// True when `beta * B < 1` or a re-grounding interval is set.
    pub fn satisfies_bounded_branching(&self) -> bool {
        self.reground_interval.is_some() || self.effective_decay() < 1.0
    }
}

/// Total influence `C*` of one response on later steps.
///
/// Without re-grounding this is `alpha / (1 - beta B)`; with interval `m` it
/// is the truncated sum `alpha * (1 - (beta B)^m) / (1 - beta B)`.
pub fn influence_total(params: &DependencyParams) -> Result<f64, BoundsError> {
    params.validate()?;
    let r = params.effective_decay();
    let a = params.alpha;
    Ok(match params.reground_interval {
        None => a / (1.0 - r),
        Some(m) => {
            if (1.0 - r).abs() < 1e-12 {
                a * f64::from(m)
            } else {
                a * (1.0 - r.powi(m as i32)) / (1.0 - r)
            }
        }
    })
}

/// Bounded-difference constant `1 + C*`.
pub fn c_star(params: &DependencyParams) -> Result<f64, BoundsError> {
    Ok(1.0 + influence_total(params)?)
}

/// Worst-case variance inflation `2 C* + C*^2`.
pub fn gamma_star(params: &DependencyParams) -> Result<f64, BoundsError> {
    let c = influence_total(params)?;
    Ok(2.0 * c + c * c)
}

/// Calibrated variance inflation for geometric decay at horizon `horizon`:
/// `alpha^2 beta^2 delta_max^2 (1 - beta^(2(T-1))) / ((1 - beta^2) T)`.
pub fn gamma_hat(params: &DependencyParams, horizon: usize) -> Result<f64, BoundsError> {
    if horizon == 0 {
        return Err(BoundsError::Input("horizon must be >= 1".into()));
    }
    let beta = params.beta;
    if !(0.0..1.0).contains(&beta) {
        return Err(BoundsError::Domain(format!("beta = {beta} is outside [0, 1)")));
    }
    if beta == 0.0 {
        return Ok(0.0);
    }
    let t = horizon as f64;
    let b2 = beta * beta;
    let scale = params.alpha.powi(2) * b2 * params.delta_max.powi(2);
    let tail = 1.0 - b2.powi(horizon as i32 - 1);
    Ok(scale * tail / ((1.0 - b2) * t))
}

/// Azuma deviation `sqrt(2 T (1 + gamma) ln(1/eta))`.
pub fn azuma_deviation(horizon: usize, gamma: f64, eta: f64) -> Result<f64, BoundsError> {
    if !(eta > 0.0 && eta < 1.0) {
        return Err(BoundsError::Domain(format!("eta = {eta} is outside (0, 1)")));
    }
    if !(gamma.is_finite() && gamma >= 0.0) {
        return Err(BoundsError::Domain(format!("gamma = {gamma} must be finite and >= 0")));
    }
    Ok((2.0 * horizon as f64 * (1.0 + gamma) * (1.0 / eta).ln()).sqrt())
}

/// Smallest whole number of steps `h` with `beta^h <= epsilon`, i.e.
/// `ceil(ln epsilon / ln beta)`; 0 when `epsilon = 1`.
pub fn effective_horizon(beta: f64, epsilon: f64) -> Result<u64, BoundsError> {
    if !(beta > 0.0 && beta < 1.0) {
        return Err(BoundsError::Domain(format!("beta = {beta} is outside (0, 1)")));
    }
    if !(epsilon > 0.0 && epsilon <= 1.0) {
        return Err(BoundsError::Domain(format!("epsilon = {epsilon} is outside (0, 1]")));
    }
    let ratio = epsilon.ln() / beta.ln();
    // Absorb rounding noise when beta^k lands exactly on epsilon.
    Ok((ratio - 1e-9).ceil().max(0.0) as u64)
}

/// Expected linear trend plus a high-probability deviation curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Envelope {
    pub horizon: usize,
    pub per_step_rate: f64,
    pub gamma: f64,
    pub delta: f64,
    /// `expected[t - 1] = t * per_step_rate`.
    pub expected: Vec<f64>,
    /// `upper[t - 1] = expected[t - 1] + deviation(t)`.
    pub upper: Vec<f64>,
}

impl Envelope {
    pub fn deviation(&self, t: usize) -> f64 {
        self.upper[t - 1] - self.expected[t - 1]
    }

    pub fn final_upper(&self) -> f64 {
        self.upper[self.horizon - 1]
    }

    pub fn final_expected(&self) -> f64 {
        self.expected[self.horizon - 1]
    }
}

/// Calibrated envelope: linear trend `t * rate` plus the Azuma deviation
/// with `gamma_hat` evaluated once at the full horizon.
pub fn build_envelope(
    horizon: usize,
    per_step_rate: f64,
    params: &DependencyParams,
    delta: f64,
) -> Result<Envelope, BoundsError> {
    let gamma = gamma_hat(params, horizon)?;
    envelope_with_gamma(horizon, per_step_rate, gamma, delta)
}

/// Envelope with an explicit `gamma` (for example the worst-case value).
pub fn envelope_with_gamma(
    horizon: usize,
    per_step_rate: f64,
    gamma: f64,
    delta: f64,
) -> Result<Envelope, BoundsError> {
    if horizon == 0 {
        return Err(BoundsError::Input("horizon must be >= 1".into()));
    }
    if !(per_step_rate.is_finite() && per_step_rate >= 0.0) {
        return Err(BoundsError::Input(format!(
            "per-step rate {per_step_rate} must be >= 0"
        )));
    }
    let mut expected = Vec::with_capacity(horizon);
    let mut upper = Vec::with_capacity(horizon);
    for t in 1..=horizon {
        let e = t as f64 * per_step_rate;
        expected.push(e);
        upper.push(e + azuma_deviation(t, gamma, delta)?);
    }
    Ok(Envelope {
        horizon,
        per_step_rate,
        gamma,
        delta,
        expected,
        upper,
    })
}

/// Read access to one chain's per-step distortions.
pub trait DistortionSeries {
    fn steps(&self) -> usize;
    fn delta(&self, index: usize) -> f64;

    /// Cumulative distortion after `index + 1` steps.
    fn cumulative(&self, index: usize) -> f64 {
        (0..=index).map(|i| self.delta(i)).sum()
    }
}

impl DistortionSeries for Vec<f64> {
    fn steps(&self) -> usize {
        self.len()
    }
    fn delta(&self, index: usize) -> f64 {
        self[index]
    }
}

impl DistortionSeries for &[f64] {
    fn steps(&self) -> usize {
        self.len()
    }
    fn delta(&self, index: usize) -> f64 {
        self[index]
    }
}

/// Mean first-step distortion over traces with at least one step.
pub fn estimate_first_step_rate<S: DistortionSeries>(traces: &[S]) -> Result<f64, BoundsError> {
    let firsts: Vec<f64> = traces.iter().filter(|t| t.steps() > 0).map(|t| t.delta(0)).collect();
    if firsts.is_empty() {
        return Err(BoundsError::Input("no trace has a first step".into()));
    }
    Ok(firsts.iter().sum::<f64>() / firsts.len() as f64)
}

/// Which points of a trace are compared against the envelope.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationMode {
    /// Only `D(T)` against `upper[T]`.
    #[default]
    FinalStep,
    /// Any `D(t)` above `upper[t]` for `t <= T`.
    AnyStep,
}

/// Fraction of traces exceeding the envelope.
pub fn violation_rate<S: DistortionSeries>(
    traces: &[S],
    env: &Envelope,
    mode: ViolationMode,
) -> Result<f64, BoundsError> {
    if traces.is_empty() {
        return Err(BoundsError::Input("no traces".into()));
    }
    let horizon = env.horizon;
    let mut violations = 0usize;
    for (i, trace) in traces.iter().enumerate() {
        if trace.steps() < horizon {
            return Err(BoundsError::Input(format!(
                "trace {i} has {} steps, envelope horizon is {horizon}",
                trace.steps()
            )));
        }
        let violated = match mode {
            ViolationMode::FinalStep => trace.cumulative(horizon - 1) > env.upper[horizon - 1],
            ViolationMode::AnyStep => {
                let mut total = 0.0;
                (0..horizon).any(|t| {
                    total += trace.delta(t);
                    total > env.upper[t]
                })
            }
        };
        if violated {
            violations += 1;
        }
    }
    Ok(violations as f64 / traces.len() as f64)
}
