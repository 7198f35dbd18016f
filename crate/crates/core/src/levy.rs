//! Bounded-variation Lévy measures: moment checks, deterministic quadrature
//! for the nonlocal operator, and truncated compound-Poisson jump sampling.
//!
//! Two families are supported. A compound Poisson measure is a finite list of
//! atoms. A `BvDensity` is a sum of rays, each carrying the radial density
//! `kappa * r^(-1-alpha) * exp(-lambda r)` on `(0, zmax]`, with `alpha < 1`
//! so that `∫ min(|z|, 1) ν(dz)` is finite.

use rand::distr::weighted::WeightedIndex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::expr::Expr;
use crate::numerics::adaptive_simpson;

#[derive(Debug, Error, PartialEq)]
pub enum LevyError {
    #[error("alpha = {0} makes the measure infinite-variation (need 0 <= alpha < 1)")]
    DivergentMeasure(f64),
    #[error("invalid cutoffs: need 0 < delta < R, got delta = {delta}, R = {r}")]
    InvalidCutoffs { delta: f64, r: f64 },
    #[error("invalid measure: {0}")]
    InvalidModel(String),
    #[error("jump density {value} at x = {x:?}, z = {z:?} lies outside [0, 1]")]
    DensityOutOfRange { value: f64, x: Vec<f64>, z: Vec<f64> },
}

/// A point mass of the measure: jump size `z` with intensity `mass`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Atom {
    pub z: Vec<f64>,
    pub mass: f64,
}

impl TryFrom<Vec<f64>> for Atom {
    type Error = String;

    fn try_from(mut v: Vec<f64>) -> Result<Self, Self::Error> {
        if v.len() < 2 {
            return Err("an atom is [z..., mass] with at least one coordinate".into());
        }
        let mass = v.pop().expect("non-empty");
        Ok(Atom { z: v, mass })
    }
}

impl From<Atom> for Vec<f64> {
    fn from(a: Atom) -> Self {
        let mut v = a.z;
        v.push(a.mass);
        v
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BvDensity {
    pub kappa: f64,
    pub alpha: f64,
    #[serde(rename = "lambda", default)]
    pub lambda_temper: f64,
    /// Default small-jump cutoff.
    #[serde(rename = "delta")]
    pub z_min_cutoff: f64,
    #[serde(rename = "zmax")]
    pub z_max: f64,
    /// Unit direction vectors; in 1D use `[[1], [-1]]` for a symmetric measure.
    #[serde(rename = "rays")]
    pub direction_set: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum LevyModel {
    CompoundPoisson { atoms: Vec<Atom> },
    BvDensity(BvDensity),
}

impl Default for LevyModel {
    fn default() -> Self {
        LevyModel::CompoundPoisson { atoms: Vec::new() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MomentCheck {
    pub first_moment_small: f64,
    pub mass_large: f64,
    pub ok: bool,
}

/// Jump-density weighting `s(x, z)` of the nonlocal operator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum JumpDensity {
    Constant {
        value: f64,
    },
    Expr {
        expr: Expr,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        lipschitz: Option<f64>,
    },
}

impl Default for JumpDensity {
    fn default() -> Self {
        JumpDensity::Constant { value: 1.0 }
    }
}

impl JumpDensity {
    pub fn eval(&self, x: &[f64], z: &[f64]) -> f64 {
        match self {
            JumpDensity::Constant { value } => *value,
            JumpDensity::Expr { expr, .. } => expr.eval_xz(x, z),
        }
    }

    pub fn is_identically_one(&self) -> bool {
        matches!(self, JumpDensity::Constant { value } if *value == 1.0)
    }

    /// Check `0 <= s <= 1` at the given sample points.
    pub fn validate_on(&self, xs: &[Vec<f64>], zs: &[Vec<f64>]) -> Result<(), LevyError> {
        for x in xs {
            for z in zs {
                let v = self.eval(x, z);
                if !(0.0..=1.0).contains(&v) {
                    return Err(LevyError::DensityOutOfRange { value: v, x: x.clone(), z: z.clone() });
                }
            }
        }
        Ok(())
    }
}

fn norm(z: &[f64]) -> f64 {
    z.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// `∫_a^b r^p e^{-λ r} dr` for `0 < a <= b`.
fn radial_integral(p: f64, lambda: f64, a: f64, b: f64) -> f64 {
    if b <= a {
        return 0.0;
    }
    if lambda == 0.0 {
        if (p + 1.0).abs() < 1e-300 {
            return (b / a).ln();
        }
        return (b.powf(p + 1.0) - a.powf(p + 1.0)) / (p + 1.0);
    }
    // r = e^t removes the algebraic singularity.
    let f = move |t: f64| ((p + 1.0) * t - lambda * t.exp()).exp();
    let (ta, tb) = (a.ln(), b.ln());
    let scale = (tb - ta) * f(ta).max(f(tb)).max(f(0.5 * (ta + tb)));
    adaptive_simpson(&f, ta, tb, 1e-14 * scale.max(1e-300))
}

/// `∫_0^b r^{-α} e^{-λ r} dr` for `0 <= α < 1`.
fn radial_integral_from_zero(alpha: f64, lambda: f64, b: f64) -> f64 {
    if b <= 0.0 {
        return 0.0;
    }
    let one_m = 1.0 - alpha;
    if lambda == 0.0 {
        return b.powf(one_m) / one_m;
    }
    // s = r^{1-α} turns the integrand into a smooth function.
    let f = move |s: f64| (-lambda * s.powf(1.0 / one_m)).exp() / one_m;
    let top = b.powf(one_m);
    adaptive_simpson(&f, 0.0, top, 1e-14 * top / one_m)
}

impl LevyModel {
    pub fn compound_poisson(atoms: Vec<Atom>) -> Result<Self, LevyError> {
        let m = LevyModel::CompoundPoisson { atoms };
        m.validate()?;
        Ok(m)
    }

    pub fn bv_density(density: BvDensity) -> Result<Self, LevyError> {
        let m = LevyModel::BvDensity(density);
        m.validate()?;
        Ok(m)
    }

    /// Dimension of the jump sizes, or `None` for an empty measure.
    pub fn dim(&self) -> Option<usize> {
        match self {
            LevyModel::CompoundPoisson { atoms } => atoms.first().map(|a| a.z.len()),
            LevyModel::BvDensity(b) => b.direction_set.first().map(Vec::len),
        }
    }

    pub fn is_empty(&self) -> bool {
        matches!(self, LevyModel::CompoundPoisson { atoms } if atoms.is_empty())
    }

    pub fn validate(&self) -> Result<(), LevyError> {
        match self {
            LevyModel::CompoundPoisson { atoms } => {
                let dim = self.dim();
                for (i, a) in atoms.iter().enumerate() {
                    if Some(a.z.len()) != dim {
                        return Err(LevyError::InvalidModel(format!("atom {i} has inconsistent dimension")));
                    }
                    if !(a.mass.is_finite() && a.mass > 0.0) {
                        return Err(LevyError::InvalidModel(format!("atom {i} mass must be positive")));
                    }
                    if a.z.iter().any(|v| !v.is_finite()) || norm(&a.z) == 0.0 {
                        return Err(LevyError::InvalidModel(format!("atom {i} must be a finite nonzero jump")));
                    }
                }
            }
            LevyModel::BvDensity(b) => {
                if !(b.alpha.is_finite() && b.alpha >= 0.0 && b.alpha < 1.0) {
                    return Err(LevyError::DivergentMeasure(b.alpha));
                }
                if !(b.kappa.is_finite() && b.kappa > 0.0) {
                    return Err(LevyError::InvalidModel("kappa must be positive".into()));
                }
                if !(b.lambda_temper.is_finite() && b.lambda_temper >= 0.0) {
                    return Err(LevyError::InvalidModel("lambda must be nonnegative".into()));
                }
                if !(b.z_min_cutoff > 0.0 && b.z_max.is_finite() && b.z_min_cutoff < b.z_max) {
                    return Err(LevyError::InvalidCutoffs { delta: b.z_min_cutoff, r: b.z_max });
                }
                if b.direction_set.is_empty() {
                    return Err(LevyError::InvalidModel("at least one ray is required".into()));
                }
                let dim = b.direction_set[0].len();
                for (i, ray) in b.direction_set.iter().enumerate() {
                    if ray.len() != dim || (norm(ray) - 1.0).abs() > 1e-9 {
                        return Err(LevyError::InvalidModel(format!("ray {i} must be a unit vector of dimension {dim}")));
                    }
                }
            }
        }
        Ok(())
    }

    /// `∫_{|z|<δ} |z| ν(dz)`.
    pub fn small_jump_first_moment(&self, delta: f64) -> f64 {
        match self {
            LevyModel::CompoundPoisson { atoms } => atoms
                .iter()
                .filter(|a| norm(&a.z) < delta)
                .map(|a| norm(&a.z) * a.mass)
                .sum(),
            LevyModel::BvDensity(b) => {
                let top = delta.min(b.z_max);
                b.direction_set.len() as f64 * b.kappa * radial_integral_from_zero(b.alpha, b.lambda_temper, top)
            }
        }
    }

    /// `ν({|z| >= δ})`, the rate of the truncated compound Poisson process.
    pub fn large_jump_intensity(&self, delta: f64) -> f64 {
        match self {
            LevyModel::CompoundPoisson { atoms } => {
                atoms.iter().filter(|a| norm(&a.z) >= delta).map(|a| a.mass).sum()
            }
            LevyModel::BvDensity(b) => {
                if delta >= b.z_max {
                    return 0.0;
                }
                b.direction_set.len() as f64
                    * b.kappa
                    * radial_integral(-1.0 - b.alpha, b.lambda_temper, delta, b.z_max)
            }
        }
    }

    /// `∫_{|z|<1} z ν(dz)`: the drift separating the compensated and
    /// uncompensated forms of the generator.
    pub fn small_jump_mean(&self, dim: usize) -> Vec<f64> {
        let mut out = vec![0.0; dim];
        match self {
            LevyModel::CompoundPoisson { atoms } => {
                for a in atoms.iter().filter(|a| norm(&a.z) < 1.0) {
                    for (o, z) in out.iter_mut().zip(&a.z) {
                        *o += a.mass * z;
                    }
                }
            }
            LevyModel::BvDensity(b) => {
                let radial = b.kappa * radial_integral_from_zero(b.alpha, b.lambda_temper, b.z_max.min(1.0));
                for ray in &b.direction_set {
                    for (o, e) in out.iter_mut().zip(ray) {
                        *o += radial * e;
                    }
                }
            }
        }
        out
    }
}

/// Numerical values of `∫_{|z|<1}|z|ν(dz)` and `∫_{|z|>=1}ν(dz)`.
///
/// For a density the small-jump integral is taken over the declared
/// cutoffs `[delta, min(1, zmax)]`.
pub fn moment_check(levy: &LevyModel) -> Result<MomentCheck, LevyError> {
    if let LevyModel::BvDensity(b) = levy {
        if !(b.alpha < 1.0) {
            return Err(LevyError::DivergentMeasure(b.alpha));
        }
    }
    levy.validate()?;
    let (first, large) = match levy {
        LevyModel::CompoundPoisson { atoms } => {
            let first = atoms.iter().filter(|a| norm(&a.z) < 1.0).map(|a| norm(&a.z) * a.mass).sum();
            let large = atoms.iter().filter(|a| norm(&a.z) >= 1.0).map(|a| a.mass).sum();
            (first, large)
        }
        LevyModel::BvDensity(b) => {
            let rays = b.direction_set.len() as f64;
            let (alpha, lam) = (b.alpha, b.lambda_temper);
            let density = move |r: f64| b.kappa * r.powf(-1.0 - alpha) * (-lam * r).exp();
            // Integrate in t = ln r; the integrand r * ν(r) * r is smooth there.
            let top = b.z_max.min(1.0);
            let first = if b.z_min_cutoff < top {
                let f = |t: f64| {
                    let r = t.exp();
                    r * r * density(r)
                };
                let (ta, tb) = (b.z_min_cutoff.ln(), top.ln());
                rays * adaptive_simpson(&f, ta, tb, 1e-12)
            } else {
                0.0
            };
            let large = if b.z_max > 1.0 {
                let f = |t: f64| {
                    let r = t.exp();
                    r * density(r)
                };
                rays * adaptive_simpson(&f, 0.0, b.z_max.ln(), 1e-12)
            } else {
                0.0
            };
            (first, large)
        }
    };
    Ok(MomentCheck { first_moment_small: first, mass_large: large, ok: first.is_finite() && large.is_finite() })
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuadNode {
    pub z: Vec<f64>,
    pub weight: f64,
}

/// Discrete version of `ν` restricted to `delta <= |z| <= R`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    pub nodes: Vec<QuadNode>,
    pub small_jump_cutoff: f64,
    pub tail_cutoff: f64,
    /// `∫_{|z|<δ} |z| ν(dz)`.
    pub discarded_small_mass: f64,
}

impl QuadratureRule {
    pub fn empty() -> Self {
        QuadratureRule { nodes: Vec::new(), small_jump_cutoff: 0.0, tail_cutoff: 0.0, discarded_small_mass: 0.0 }
    }

    pub fn apply(&self, f: impl Fn(&[f64]) -> f64) -> f64 {
        self.nodes.iter().map(|n| n.weight * f(&n.z)).sum()
    }

    pub fn total_mass(&self) -> f64 {
        self.nodes.iter().map(|n| n.weight).sum()
    }

    pub fn jump_sizes(&self) -> Vec<Vec<f64>> {
        self.nodes.iter().map(|n| n.z.clone()).collect()
    }
}

/// Log-spaced composite midpoint rule per ray, or the atoms themselves.
pub fn build_quadrature(
    levy: &LevyModel,
    delta: f64,
    r: f64,
    n_per_decade: usize,
) -> Result<QuadratureRule, LevyError> {
    if !(delta > 0.0 && r.is_finite() && delta < r) {
        return Err(LevyError::InvalidCutoffs { delta, r });
    }
    if n_per_decade < 4 {
        return Err(LevyError::InvalidModel(format!("n_per_decade must be >= 4, got {n_per_decade}")));
    }
    levy.validate()?;
    match levy {
        LevyModel::CompoundPoisson { atoms } => {
            let kept: Vec<QuadNode> = atoms
                .iter()
                .filter(|a| norm(&a.z) >= delta)
                .map(|a| QuadNode { z: a.z.clone(), weight: a.mass })
                .collect();
            let reach = kept.iter().map(|n| norm(&n.z)).fold(r, f64::max);
            Ok(QuadratureRule {
                nodes: kept,
                small_jump_cutoff: delta,
                tail_cutoff: reach,
                discarded_small_mass: levy.small_jump_first_moment(delta),
            })
        }
        LevyModel::BvDensity(b) => {
            let top = r.min(b.z_max);
            let mut nodes = Vec::new();
            if delta < top {
                let decades = (top / delta).log10();
                let cells = ((n_per_decade as f64 * decades).ceil() as usize).max(1);
                let ratio = (top / delta).powf(1.0 / cells as f64);
                for ray in &b.direction_set {
                    let mut a = delta;
                    for j in 0..cells {
                        let bnd = if j + 1 == cells { top } else { a * ratio };
                        let weight = b.kappa * radial_integral(-1.0 - b.alpha, b.lambda_temper, a, bnd);
                        let mid = (a * bnd).sqrt();
                        nodes.push(QuadNode { z: ray.iter().map(|e| e * mid).collect(), weight });
                        a = bnd;
                    }
                }
            }
            Ok(QuadratureRule {
                nodes,
                small_jump_cutoff: delta,
                tail_cutoff: top,
                discarded_small_mass: levy.small_jump_first_moment(delta),
            })
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Jump {
    pub t: f64,
    pub z: Vec<f64>,
}

enum SizeLaw {
    Atoms { atoms: Vec<Vec<f64>>, index: WeightedIndex<f64> },
    Radial { rays: Vec<Vec<f64>>, alpha: f64, lambda: f64, lo: f64, hi: f64 },
}

/// Compound Poisson sampler for the jumps with `|z| >= delta`.
pub struct JumpSampler {
    rate: f64,
    law: Option<SizeLaw>,
}

impl JumpSampler {
    pub fn new(levy: &LevyModel, delta: f64) -> Result<Self, LevyError> {
        if !(delta > 0.0) {
            return Err(LevyError::InvalidCutoffs { delta, r: f64::INFINITY });
        }
        levy.validate()?;
        let rate = levy.large_jump_intensity(delta);
        if rate <= 0.0 {
            return Ok(JumpSampler { rate: 0.0, law: None });
        }
        let law = match levy {
            LevyModel::CompoundPoisson { atoms } => {
                let kept: Vec<&Atom> = atoms.iter().filter(|a| norm(&a.z) >= delta).collect();
                let index = WeightedIndex::new(kept.iter().map(|a| a.mass))
                    .map_err(|e| LevyError::InvalidModel(e.to_string()))?;
                SizeLaw::Atoms { atoms: kept.iter().map(|a| a.z.clone()).collect(), index }
            }
            LevyModel::BvDensity(b) => SizeLaw::Radial {
                rays: b.direction_set.clone(),
                alpha: b.alpha,
                lambda: b.lambda_temper,
                lo: delta,
                hi: b.z_max,
            },
        };
        Ok(JumpSampler { rate, law: Some(law) })
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }

    pub fn sample_size<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        match self.law.as_ref().expect("sample_size called on an empty sampler") {
            SizeLaw::Atoms { atoms, index } => atoms[index.sample(rng)].clone(),
            SizeLaw::Radial { rays, alpha, lambda, lo, hi } => {
                let ray = &rays[rng.random_range(0..rays.len())];
                let r = loop {
                    let u: f64 = rng.random();
                    let r = if *alpha == 0.0 {
                        lo * (hi / lo).powf(u)
                    } else {
                        let (a, b) = (lo.powf(-alpha), hi.powf(-alpha));
                        (a - u * (a - b)).powf(-1.0 / alpha)
                    };
                    if *lambda == 0.0 || rng.random::<f64>() < (-lambda * (r - lo)).exp() {
                        break r;
                    }
                };
                ray.iter().map(|e| e * r).collect()
            }
        }
    }

    /// Jumps on `[0, horizon]` in increasing time order.
    pub fn sample_path<R: Rng + ?Sized>(&self, horizon: f64, rng: &mut R) -> Vec<Jump> {
        let mut out = Vec::new();
        if self.rate <= 0.0 {
            return out;
        }
        let exp = Exp::new(self.rate).expect("positive rate");
        let mut t = 0.0;
        loop {
            t += exp.sample(rng);
            if t > horizon {
                break;
            }
            out.push(Jump { t, z: self.sample_size(rng) });
        }
        out
    }
}

/// Jumps of size `|z| >= delta` on `[0, horizon]`, reproducible from `seed`.
pub fn sample_jumps(levy: &LevyModel, delta: f64, horizon: f64, seed: u64) -> Result<Vec<Jump>, LevyError> {
    let sampler = JumpSampler::new(levy, delta)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(sampler.sample_path(horizon, &mut rng))
}

/// Bound on the displacement dropped by discarding jumps `|z| < delta` over `[0, horizon]`.
pub fn bounded_variation_error_bound(levy: &LevyModel, delta: f64, horizon: f64) -> f64 {
    horizon * levy.small_jump_first_moment(delta)
}
