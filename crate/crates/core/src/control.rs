//! Controlled jump-diffusion `dX = −(b + n ζ̇) dt + σ dW + dZ` on a domain,
//! discounted cost estimates and value checks against PDE fields.
//!
//! `σ` is the Cholesky factor of `2a`, so the generator of the uncontrolled
//! process is `−L + I` with the same `a`, `b` as the operator.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{Domain, Grid, SolutionField};
use crate::levy::{bounded_variation_error_bound, Jump, JumpSampler, LevyError, LevyModel};
use crate::numerics::GaussRule;
use crate::operator::Coefficients;
use crate::penalty::PenaltyFn;

#[derive(Debug, Error, PartialEq)]
pub enum ControlError {
    #[error("start point {0:?} is not inside the domain")]
    StartOutsideDomain(Vec<f64>),
    #[error("push at t = {t} is not admissible: {reason}")]
    PushOutsideAdmissible { t: f64, reason: String },
    #[error("invalid simulation parameters: {0}")]
    InvalidParams(String),
    #[error("invalid policy: {0}")]
    InvalidPolicy(String),
    #[error(transparent)]
    Levy(#[from] LevyError),
}

/// Parameters of the controlled SDE.
#[derive(Debug, Clone, PartialEq)]
pub struct SdeParams {
    /// Supplies `b̃ = b`, `σ = chol(2a)`, `h̃` and `g̃`.
    pub coeffs: Coefficients,
    pub levy: LevyModel,
    pub jump_truncation: f64,
    /// Discount rate.
    pub q: f64,
    pub domain: Domain,
    pub t_max: f64,
    pub dt: f64,
    /// Declared growth constant `|σ|² + |b|² ≤ C(1 + |x|²)`; checked when present.
    pub c12: Option<f64>,
}

impl SdeParams {
    pub fn new(coeffs: Coefficients, levy: LevyModel, domain: Domain, q: f64, dt: f64, t_max: f64, jump_truncation: f64) -> Self {
        SdeParams { coeffs, levy, jump_truncation, q, domain, t_max, dt, c12: None }
    }

    pub fn dim(&self) -> usize {
        self.domain.dim()
    }

    pub fn validate(&self) -> Result<(), ControlError> {
        let bad = |m: String| Err(ControlError::InvalidParams(m));
        if !(self.q.is_finite() && self.q > 0.0) {
            return bad(format!("discount q must be > 0, got {}", self.q));
        }
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return bad(format!("dt must be > 0, got {}", self.dt));
        }
        if !(self.t_max.is_finite() && self.t_max > 0.0) {
            return bad(format!("t_max must be > 0, got {}", self.t_max));
        }
        self.domain.validate().map_err(|e| ControlError::InvalidParams(e.to_string()))?;
        if !self.levy.is_empty() {
            if !(self.jump_truncation > 0.0) {
                return bad(format!("jump truncation must be > 0, got {}", self.jump_truncation));
            }
            self.levy.validate()?;
        }
        let growth = self.growth_constant(64, 0x5eed);
        if !growth.is_finite() {
            return bad("coefficients are not finite on the domain".into());
        }
        if let Some(c) = self.c12 {
            if growth > c * (1.0 + 1e-12) {
                return bad(format!("growth constant {growth:.6e} exceeds the declared {c:.6e}"));
            }
        }
        Ok(())
    }

    /// Largest `(|σ|² + |b|²)/(1 + |x|²)` over `samples` random points of the bounding box.
    pub fn growth_constant(&self, samples: usize, seed: u64) -> f64 {
        let (lo, hi) = self.domain.bounding_box();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut worst = 0.0f64;
        for _ in 0..samples {
            let x: Vec<f64> = lo.iter().zip(&hi).map(|(l, u)| l + (u - l) * rng.random::<f64>()).collect();
            let s = self.sigma_at(&x);
            let b = self.coeffs.b_at(&x);
            let d = self.dim();
            let mut n2 = 0.0;
            for i in 0..d {
                n2 += b[i] * b[i];
                for j in 0..d {
                    n2 += s[i][j] * s[i][j];
                }
            }
            let x2: f64 = x.iter().map(|v| v * v).sum();
            worst = worst.max(n2 / (1.0 + x2));
        }
        worst
    }

    /// Lower Cholesky factor of `2a(x)`, with nonpositive pivots clamped to 0.
    pub fn sigma_at(&self, x: &[f64]) -> [[f64; 2]; 2] {
        let a = self.coeffs.a_at(x);
        let l11 = (2.0 * a[0][0]).max(0.0).sqrt();
        if self.dim() == 1 {
            return [[l11, 0.0], [0.0, 0.0]];
        }
        let l21 = if l11 > 0.0 { 2.0 * a[1][0] / l11 } else { 0.0 };
        let l22 = (2.0 * a[1][1] - l21 * l21).max(0.0).sqrt();
        [[l11, 0.0], [l21, l22]]
    }

    /// Displacement bound for the dropped small jumps over the discount
    /// time scale `min(t_max, 1/q)`.
    pub fn discarded_bias_bound(&self) -> f64 {
        if self.levy.is_empty() {
            0.0
        } else {
            bounded_variation_error_bound(&self.levy, self.jump_truncation, self.t_max.min(1.0 / self.q)).max(0.0)
        }
    }
}

/// Nodal gradients of a field, interpolated multilinearly.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientField {
    grid: Arc<Grid>,
    grads: Vec<[f64; 2]>,
}

impl GradientField {
    /// Central differences of the zero-extended field at every lattice node,
    /// one-sided at the lattice edge.
    pub fn from_field(field: &SolutionField) -> Self {
        let grid = field.grid().clone();
        let h = grid.spacing();
        let vals = field.values();
        let grads = (0..grid.n_nodes())
            .map(|node| {
                let mut g = [0.0; 2];
                for (axis, ga) in g.iter_mut().enumerate().take(grid.dim()) {
                    let lo = grid.neighbor(node, axis, -1);
                    let hi = grid.neighbor(node, axis, 1);
                    *ga = match (lo, hi) {
                        (Some(l), Some(r)) => (vals[r] - vals[l]) / (2.0 * h),
                        (None, Some(r)) => (vals[r] - vals[node]) / h,
                        (Some(l), None) => (vals[node] - vals[l]) / h,
                        (None, None) => 0.0,
                    };
                }
                g
            })
            .collect();
        GradientField { grid, grads }
    }

    pub fn at(&self, x: &[f64]) -> [f64; 2] {
        let mut out = [0.0; 2];
        if let Some(st) = self.grid.interpolation_stencil(x) {
            for (node, w) in st {
                out[0] += w * self.grads[node][0];
                out[1] += w * self.grads[node][1];
            }
        }
        out
    }

    pub fn sup_norm(&self) -> f64 {
        self.grads.iter().map(|g| (g[0] * g[0] + g[1] * g[1]).sqrt()).fold(0.0, f64::max)
    }
}

/// The feedback `n = Du/|Du|`, `ζ̇ = 2ψ'_ε(|Du|² − g̃²)|Du|`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeedbackPolicy {
    pub gradient: GradientField,
    pub penalty: PenaltyFn,
    pub g_cost: crate::expr::Expr,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ControlPolicy {
    PenalizedFeedback(FeedbackPolicy),
    NullControl,
    /// Constant direction and rate; `eps` fixes the running cost `l_ε`.
    ConstantRate { n: Vec<f64>, rate: f64, eps: f64 },
}

impl ControlPolicy {
    pub fn validate(&self, dim: usize) -> Result<(), ControlError> {
        match self {
            ControlPolicy::ConstantRate { n, rate, eps } => {
                if n.len() != dim {
                    return Err(ControlError::InvalidPolicy(format!("direction has {} components, expected {dim}", n.len())));
                }
                let norm = n.iter().map(|v| v * v).sum::<f64>().sqrt();
                if (norm - 1.0).abs() > 1e-9 {
                    return Err(ControlError::InvalidPolicy(format!("direction must be a unit vector, |n| = {norm}")));
                }
                if !(*eps > 0.0 && *eps < 1.0) {
                    return Err(ControlError::InvalidPolicy(format!("eps must lie in (0, 1), got {eps}")));
                }
                if !(*rate >= 0.0 && *rate < 1.0 / eps) {
                    return Err(ControlError::InvalidPolicy(format!("rate must lie in [0, 1/eps), got {rate}")));
                }
                Ok(())
            }
            ControlPolicy::PenalizedFeedback(p) => {
                if p.gradient.grid.dim() != dim {
                    return Err(ControlError::InvalidPolicy("field dimension differs from the domain".into()));
                }
                Ok(())
            }
            ControlPolicy::NullControl => Ok(()),
        }
    }

    /// Direction and rate at `x`.
    pub fn control_at(&self, x: &[f64]) -> ([f64; 2], f64) {
        match self {
            ControlPolicy::NullControl => ([1.0, 0.0], 0.0),
            ControlPolicy::ConstantRate { n, rate, .. } => {
                let mut d = [0.0; 2];
                d[..n.len()].copy_from_slice(n);
                (d, *rate)
            }
            ControlPolicy::PenalizedFeedback(p) => {
                let g = p.gradient.at(x);
                let norm = (g[0] * g[0] + g[1] * g[1]).sqrt();
                if norm == 0.0 {
                    return ([1.0, 0.0], 0.0);
                }
                let gt = p.g_cost.eval(x);
                let rate = 2.0 * p.penalty.psi_prime(norm * norm - gt * gt) * norm;
                ([g[0] / norm, g[1] / norm], rate)
            }
        }
    }

    /// `l_ε(x, ζ̇ n)`; zero for the null control.
    fn running_penalty(&self, g_at_x: f64, rate: f64) -> f64 {
        if rate == 0.0 {
            return 0.0;
        }
        match self {
            ControlPolicy::NullControl => 0.0,
            ControlPolicy::ConstantRate { eps, .. } => PenaltyFn::new(*eps).legendre(g_at_x, rate),
            ControlPolicy::PenalizedFeedback(p) => p.penalty.legendre(g_at_x, rate),
        }
    }
}

/// Feedback policy from a penalized solution.
pub fn penalized_policy(u_eps: &SolutionField, eps: f64, g_field: &crate::expr::Expr) -> ControlPolicy {
    ControlPolicy::PenalizedFeedback(FeedbackPolicy {
        gradient: GradientField::from_field(u_eps),
        penalty: PenaltyFn::new(eps),
        g_cost: g_field.clone(),
    })
}

/// A discrete push `X ← X − size·n` at time `t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Push {
    pub t: f64,
    pub direction: Vec<f64>,
    pub size: f64,
}

/// A user-supplied singular test control: constant continuous rate plus pushes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControlPathSpec {
    pub direction: Vec<f64>,
    #[serde(default)]
    pub rate: f64,
    #[serde(default)]
    pub pushes: Vec<Push>,
}

impl ControlPathSpec {
    pub fn null(dim: usize) -> Self {
        let mut direction = vec![0.0; dim];
        direction[0] = 1.0;
        ControlPathSpec { direction, rate: 0.0, pushes: Vec::new() }
    }

    pub fn validate(&self, dim: usize) -> Result<(), ControlError> {
        let unit = |n: &[f64]| n.len() == dim && (n.iter().map(|v| v * v).sum::<f64>().sqrt() - 1.0).abs() <= 1e-9;
        if !unit(&self.direction) {
            return Err(ControlError::InvalidPolicy("continuous direction must be a unit vector of the domain dimension".into()));
        }
        if !(self.rate.is_finite() && self.rate >= 0.0) {
            return Err(ControlError::InvalidPolicy(format!("rate must be finite and >= 0, got {}", self.rate)));
        }
        for w in self.pushes.windows(2) {
            if w[1].t <= w[0].t {
                return Err(ControlError::PushOutsideAdmissible { t: w[1].t, reason: "push times must increase".into() });
            }
        }
        for p in &self.pushes {
            if !(p.t.is_finite() && p.t >= 0.0) {
                return Err(ControlError::PushOutsideAdmissible { t: p.t, reason: "time must be finite and >= 0".into() });
            }
            if !(p.size.is_finite() && p.size >= 0.0) {
                return Err(ControlError::PushOutsideAdmissible { t: p.t, reason: format!("size must be >= 0, got {}", p.size) });
            }
            if !unit(&p.direction) {
                return Err(ControlError::PushOutsideAdmissible { t: p.t, reason: "direction must be a unit vector".into() });
            }
        }
        Ok(())
    }
}

/// Parse one control spec or a list of them from JSON and validate each for `dim`.
pub fn parse_control_specs(text: &str, dim: usize) -> Result<Vec<ControlPathSpec>, ControlError> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum OneOrMany {
        One(ControlPathSpec),
        Many(Vec<ControlPathSpec>),
    }
    let parsed: OneOrMany =
        serde_json::from_str(text).map_err(|e| ControlError::InvalidPolicy(format!("control spec: {e}")))?;
    let specs = match parsed {
        OneOrMany::One(s) => vec![s],
        OneOrMany::Many(v) => v,
    };
    if specs.is_empty() {
        return Err(ControlError::InvalidPolicy("control spec list is empty".into()));
    }
    for s in &specs {
        s.validate(dim)?;
    }
    Ok(specs)
}

/// One simulated trajectory.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Path {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    /// `None` when the path was stopped at `t_max`.
    pub exit_time: Option<f64>,
    pub n_jumps: usize,
    pub cost: f64,
    pub max_rate: f64,
}

#[derive(Debug, Clone, Copy, Default)]
struct Outcome {
    cost: f64,
    exit_time: Option<f64>,
    n_jumps: usize,
    max_rate: f64,
    max_drift: f64,
}

enum Law<'a> {
    Feedback(&'a ControlPolicy),
    Singular { spec: &'a ControlPathSpec, gl: &'a GaussRule },
}

/// Seeded streams: jump times/sizes, Brownian increments, bridge uniforms.
fn streams(seed: u64) -> [ChaCha8Rng; 3] {
    let mut out = [0u64, 1, 2].map(|_| ChaCha8Rng::seed_from_u64(seed));
    for (k, r) in out.iter_mut().enumerate() {
        r.set_stream(k as u64);
    }
    out
}

/// Probability that a Brownian bridge between two interior points left the domain.
fn bridge_exit_probability(params: &SdeParams, x0: &[f64], x1: &[f64], sigma: &[[f64; 2]; 2], step: f64) -> f64 {
    let d = params.dim();
    let f0 = params.domain.boundary_faces(x0);
    let f1 = params.domain.boundary_faces(x1);
    let mut stay = 1.0;
    for ((d0, n), (d1, _)) in f0.iter().zip(&f1) {
        // Variance rate of n·X is |σᵀn|².
        let mut var = 0.0;
        for j in 0..d {
            let s: f64 = (0..d).map(|i| n[i] * sigma[i][j]).sum();
            var += s * s;
        }
        if var <= 0.0 || *d0 <= 0.0 || *d1 <= 0.0 {
            continue;
        }
        stay *= 1.0 - (-2.0 * d0 * d1 / (var * step)).exp();
    }
    1.0 - stay
}

fn run_path(params: &SdeParams, law: &Law, x0: &[f64], seed: u64, mut record: Option<&mut Path>) -> Result<Outcome, ControlError> {
    let d = params.dim();
    let [mut rj, mut rb, mut ru] = streams(seed);
    let jumps: Vec<Jump> = if params.levy.is_empty() {
        Vec::new()
    } else {
        JumpSampler::new(&params.levy, params.jump_truncation)?.sample_path(params.t_max, &mut rj)
    };
    let pushes: &[Push] = match law {
        Law::Singular { spec, .. } => {
            for p in &spec.pushes {
                if let Some(j) = jumps.iter().find(|j| (j.t - p.t).abs() <= 1e-12 * (1.0 + p.t)) {
                    return Err(ControlError::PushOutsideAdmissible {
                        t: p.t,
                        reason: format!("coincides with a jump at t = {}", j.t),
                    });
                }
            }
            &spec.pushes
        }
        Law::Feedback(_) => &[],
    };
    let mut x = x0.to_vec();
    let mut t = 0.0;
    let (mut next_jump, mut next_push) = (0usize, 0usize);
    let mut out = Outcome::default();
    let mut x_new = vec![0.0; d];
    if let Some(p) = record.as_deref_mut() {
        p.times.push(0.0);
        p.states.push(x.clone());
    }
    'outer: while t < params.t_max {
        let t_event = jumps
            .get(next_jump)
            .map_or(f64::INFINITY, |j| j.t)
            .min(pushes.get(next_push).map_or(f64::INFINITY, |p| p.t));
        let t_stop = (t + params.dt).min(params.t_max).min(t_event);
        let step = t_stop - t;
        if step > 0.0 {
            let disc = (-params.q * t).exp();
            let b = params.coeffs.b_at(&x);
            let (n, rate) = match law {
                Law::Feedback(p) => p.control_at(&x),
                Law::Singular { spec, .. } => {
                    let mut n = [0.0; 2];
                    n[..d].copy_from_slice(&spec.direction);
                    (n, spec.rate)
                }
            };
            let g = params.coeffs.g_at(&x);
            let running = params.coeffs.h_at(&x)
                + match law {
                    Law::Feedback(p) => p.running_penalty(g, rate),
                    Law::Singular { .. } => g * rate,
                };
            out.cost += disc * running * step;
            out.max_rate = out.max_rate.max(rate);
            let sigma = params.sigma_at(&x);
            let xi: [f64; 2] = [rb.sample(StandardNormal), if d == 2 { rb.sample(StandardNormal) } else { 0.0 }];
            let sq = step.sqrt();
            let mut drift2 = 0.0;
            for i in 0..d {
                let drift = -(b[i] + n[i] * rate);
                drift2 += drift * drift;
                let noise: f64 = (0..d).map(|j| sigma[i][j] * xi[j]).sum();
                x_new[i] = x[i] + drift * step + noise * sq;
            }
            out.max_drift = out.max_drift.max(drift2.sqrt());
            let u: f64 = ru.random();
            let exited = !params.domain.contains(&x_new)
                || u < bridge_exit_probability(params, &x, &x_new, &sigma, step);
            t = t_stop;
            x.copy_from_slice(&x_new);
            if let Some(p) = record.as_deref_mut() {
                p.times.push(t);
                p.states.push(x.clone());
            }
            if exited {
                out.exit_time = Some(t);
                break 'outer;
            }
        } else {
            t = t_stop;
        }
        // Events at t_stop, one at a time.
        while next_push < pushes.len() && pushes[next_push].t <= t {
            let p = &pushes[next_push];
            next_push += 1;
            let Law::Singular { gl, .. } = law else { unreachable!() };
            let line = gl.integrate(0.0, 1.0, |lam| {
                let y: Vec<f64> = (0..d).map(|i| x[i] - lam * p.direction[i] * p.size).collect();
                params.coeffs.g_at(&y)
            });
            out.cost += (-params.q * t).exp() * p.size * line;
            for i in 0..d {
                x[i] -= p.direction[i] * p.size;
            }
            if let Some(r) = record.as_deref_mut() {
                r.times.push(t);
                r.states.push(x.clone());
            }
            if !params.domain.contains(&x) {
                out.exit_time = Some(t);
                break 'outer;
            }
        }
        while next_jump < jumps.len() && jumps[next_jump].t <= t {
            let j = &jumps[next_jump];
            next_jump += 1;
            out.n_jumps += 1;
            for i in 0..d {
                x[i] += j.z[i];
            }
            if let Some(r) = record.as_deref_mut() {
                r.times.push(t);
                r.states.push(x.clone());
            }
            if !params.domain.contains(&x) {
                out.exit_time = Some(t);
                break 'outer;
            }
        }
    }
    Ok(out)
}

fn check_start(params: &SdeParams, x0: &[f64]) -> Result<(), ControlError> {
    if x0.len() != params.dim() || !params.domain.contains(x0) {
        return Err(ControlError::StartOutsideDomain(x0.to_vec()));
    }
    Ok(())
}

/// Simulate one controlled path with its full trajectory.
pub fn simulate_path(params: &SdeParams, policy: &ControlPolicy, x0: &[f64], seed: u64) -> Result<Path, ControlError> {
    params.validate()?;
    policy.validate(params.dim())?;
    check_start(params, x0)?;
    let mut path = Path { times: Vec::new(), states: Vec::new(), exit_time: None, n_jumps: 0, cost: 0.0, max_rate: 0.0 };
    let o = run_path(params, &Law::Feedback(policy), x0, seed, Some(&mut path))?;
    path.exit_time = o.exit_time;
    path.n_jumps = o.n_jumps;
    path.cost = o.cost;
    path.max_rate = o.max_rate;
    Ok(path)
}

/// Monte Carlo estimate of a discounted cost.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CostEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub n_paths: usize,
    pub seed: u64,
    pub discarded_bias_bound: f64,
    pub mean_jumps: f64,
    /// Fraction of paths stopped at `t_max` before exiting.
    pub censored_fraction: f64,
    pub max_rate: f64,
    pub max_drift: f64,
}

fn estimate(params: &SdeParams, law: &Law, x0: &[f64], n_paths: usize, base_seed: u64) -> Result<CostEstimate, ControlError> {
    if n_paths == 0 {
        return Err(ControlError::InvalidParams("n_paths must be positive".into()));
    }
    let outcomes: Vec<Outcome> = (0..n_paths)
        .into_par_iter()
        .map(|i| run_path(params, law, x0, base_seed.wrapping_add(i as u64), None))
        .collect::<Result<_, _>>()?;
    let n = n_paths as f64;
    let mean = outcomes.iter().map(|o| o.cost).sum::<f64>() / n;
    let var = if n_paths > 1 {
        outcomes.iter().map(|o| (o.cost - mean) * (o.cost - mean)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    Ok(CostEstimate {
        mean,
        stderr: (var / n).sqrt(),
        n_paths,
        seed: base_seed,
        discarded_bias_bound: params.discarded_bias_bound(),
        mean_jumps: outcomes.iter().map(|o| o.n_jumps as f64).sum::<f64>() / n,
        censored_fraction: outcomes.iter().filter(|o| o.exit_time.is_none()).count() as f64 / n,
        max_rate: outcomes.iter().map(|o| o.max_rate).fold(0.0, f64::max),
        max_drift: outcomes.iter().map(|o| o.max_drift).fold(0.0, f64::max),
    })
}

/// `E ∫₀^τ e^{−qt} [h̃ + l_ε(X, ζ̇ n)] dt` under an absolutely continuous policy.
pub fn estimate_penalized_value(
    params: &SdeParams,
    policy: &ControlPolicy,
    x0: &[f64],
    n_paths: usize,
    base_seed: u64,
) -> Result<CostEstimate, ControlError> {
    params.validate()?;
    policy.validate(params.dim())?;
    check_start(params, x0)?;
    estimate(params, &Law::Feedback(policy), x0, n_paths, base_seed)
}

/// Cost of a singular test control: running cost, `g̃ dζ^c` and push line integrals.
pub fn estimate_singular_value(
    params: &SdeParams,
    spec: &ControlPathSpec,
    x0: &[f64],
    n_paths: usize,
    base_seed: u64,
) -> Result<CostEstimate, ControlError> {
    params.validate()?;
    spec.validate(params.dim())?;
    check_start(params, x0)?;
    let gl = GaussRule::new(32);
    estimate(params, &Law::Singular { spec, gl: &gl }, x0, n_paths, base_seed)
}

#[derive(Debug, Clone, PartialEq)]
pub enum VerifyMode {
    /// Compare the field with the cost of its own penalized feedback.
    Penalized { eps: f64 },
    /// Every listed control must cost at least the field value.
    Singular { controls: Vec<ControlPathSpec> },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerificationEntry {
    pub x0: Vec<f64>,
    pub control: String,
    pub field_value: f64,
    pub estimate: CostEstimate,
    pub dt_bias: f64,
    pub jump_bias: f64,
    pub tolerance: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerificationReport {
    pub mode: String,
    pub entries: Vec<VerificationEntry>,
    pub all_pass: bool,
}

/// Check the value equality (penalized) or the cost lower bound (singular) at each start point.
pub fn verify_value_equality(
    params: &SdeParams,
    field: &SolutionField,
    mode: &VerifyMode,
    x0_list: &[Vec<f64>],
    n_paths: usize,
    base_seed: u64,
) -> Result<VerificationReport, ControlError> {
    let grad_sup = GradientField::from_field(field).sup_norm();
    let jump_bias = (grad_sup * params.discarded_bias_bound()).max(0.0);
    let mut entries = Vec::new();
    let entry = |x0: &Vec<f64>, control: String, est: CostEstimate, two_sided: bool| {
        let field_value = field.value_extended(x0);
        let dt_bias = 2.0 * params.dt * (est.max_drift + 1.0);
        let tolerance = 3.0 * est.stderr + dt_bias + jump_bias;
        let pass = if two_sided {
            (est.mean - field_value).abs() <= tolerance
        } else {
            est.mean >= field_value - tolerance
        };
        VerificationEntry { x0: x0.clone(), control, field_value, estimate: est, dt_bias, jump_bias, tolerance, pass }
    };
    let mode_name = match mode {
        VerifyMode::Penalized { eps } => {
            let policy = penalized_policy(field, *eps, &params.coeffs.g_cost);
            for x0 in x0_list {
                let est = estimate_penalized_value(params, &policy, x0, n_paths, base_seed)?;
                entries.push(entry(x0, "penalized_feedback".into(), est, true));
            }
            "penalized"
        }
        VerifyMode::Singular { controls } => {
            for x0 in x0_list {
                for (k, spec) in controls.iter().enumerate() {
                    let est = estimate_singular_value(params, spec, x0, n_paths, base_seed)?;
                    entries.push(entry(x0, format!("control_{k}"), est, false));
                }
            }
            "singular"
        }
    };
    let all_pass = entries.iter().all(|e| e.pass);
    Ok(VerificationReport { mode: mode_name.into(), entries, all_pass })
}
