//! The smooth penalty `ψ_ε` and its Legendre transform.
//!
//! `ψ_ε(r) = Φ(r/ε)` for `0 < r < 2ε`, where `Φ(x) = ∫₀ˣ η` and the blend
//! `η(t) = 1 / (1 + exp(1/t − 1/(2−t)))` rises smoothly from 0 to 1 on `(0, 2)`.
//! Since `η(t) + η(2−t) = 1`, `Φ(2) = 1` and `Φ(2−x) = 1 − x + Φ(x)`, so the
//! blend meets the linear branch `(r − ε)/ε` with matching value and slopes.

use std::sync::OnceLock;

use crate::numerics::{gauss_legendre, golden_section_max, GaussRule};

const TABLE_INTERVALS: usize = 4096;
const LOG_SPACE_BELOW: f64 = 0.05;

/// `E(t) = 1/t − 1/(2−t)` on `(0, 2)`.
fn blend_exponent(t: f64) -> f64 {
    1.0 / t - 1.0 / (2.0 - t)
}

/// The transition profile η.
pub fn blend(t: f64) -> f64 {
    if t <= 0.0 {
        0.0
    } else if t >= 2.0 {
        1.0
    } else {
        1.0 / (1.0 + blend_exponent(t).exp())
    }
}

/// Derivative of η.
pub fn blend_prime(t: f64) -> f64 {
    if t <= 0.0 || t >= 2.0 {
        return 0.0;
    }
    let e = blend_exponent(t);
    let num = 1.0 / (t * t) + 1.0 / ((2.0 - t) * (2.0 - t));
    num / (2.0 + 2.0 * e.cosh())
}

/// `ln η(t)` for `0 < t < 2`, without underflow.
fn ln_blend(t: f64) -> f64 {
    let e = blend_exponent(t);
    // -softplus(e)
    if e > 0.0 {
        -e - (-e).exp().ln_1p()
    } else {
        -(e.exp().ln_1p())
    }
}

struct BlendTable {
    step: f64,
    values: Vec<f64>,
}

impl BlendTable {
    fn build() -> Self {
        let n = TABLE_INTERVALS;
        let step = 2.0 / n as f64;
        let rule = GaussRule::new(16);
        let mut values = vec![0.0; n + 1];
        let half = n / 2;
        for i in 0..half {
            let a = i as f64 * step;
            values[i + 1] = values[i] + rule.integrate(a, a + step, blend);
        }
        for i in (half + 1)..=n {
            let x = i as f64 * step;
            values[i] = x - 1.0 + values[n - i];
        }
        BlendTable { step, values }
    }

    /// Cubic Hermite interpolation of Φ with exact derivatives η.
    fn eval(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        if x >= 2.0 {
            return x - 1.0;
        }
        let s = x / self.step;
        let i = (s.floor() as usize).min(TABLE_INTERVALS - 1);
        let x0 = i as f64 * self.step;
        let x1 = x0 + self.step;
        let t = (x - x0) / self.step;
        let (p0, p1) = (self.values[i], self.values[i + 1]);
        let (m0, m1) = (blend(x0) * self.step, blend(x1) * self.step);
        let t2 = t * t;
        let t3 = t2 * t;
        (2.0 * t3 - 3.0 * t2 + 1.0) * p0 + (t3 - 2.0 * t2 + t) * m0 + (-2.0 * t3 + 3.0 * t2) * p1 + (t3 - t2) * m1
    }
}

fn table() -> &'static BlendTable {
    static TABLE: OnceLock<BlendTable> = OnceLock::new();
    TABLE.get_or_init(BlendTable::build)
}

/// `Φ(x) = ∫₀ˣ η`, extended by 0 below 0 and by `x − 1` above 2.
pub fn blend_integral(x: f64) -> f64 {
    // Near 0 the Hermite table undershoots below zero.
    if x > 0.0 && x < LOG_SPACE_BELOW {
        return ln_blend_integral(x).exp();
    }
    table().eval(x)
}

/// `ln Φ(x)` for `x > 0`, finite even where `Φ(x)` underflows.
pub fn ln_blend_integral(x: f64) -> f64 {
    if x <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if x >= LOG_SPACE_BELOW {
        return blend_integral(x).ln();
    }
    // Substitute t = 1/(1/x + s); the integrand then decays like e^{-s}.
    let v0 = 1.0 / x;
    let (nodes, weights) = gauss_legendre(16);
    let panels = 12;
    let top = 60.0;
    let mut terms = Vec::with_capacity(panels * nodes.len());
    for p in 0..panels {
        let a = top * p as f64 / panels as f64;
        let b = top * (p + 1) as f64 / panels as f64;
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        for (xn, w) in nodes.iter().zip(&weights) {
            let v = v0 + mid + half * xn;
            terms.push((w * half).ln() + ln_blend(1.0 / v) - 2.0 * v.ln());
        }
    }
    let m = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    m + terms.iter().map(|l| (l - m).exp()).sum::<f64>().ln()
}

/// The penalty `ψ_ε` for a fixed `ε ∈ (0, 1)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PenaltyFn {
    eps: f64,
}

impl PenaltyFn {
    /// Panics unless `0 < eps < 1`.
    pub fn new(eps: f64) -> Self {
        assert!(eps > 0.0 && eps < 1.0, "eps must lie in (0, 1), got {eps}");
        table();
        PenaltyFn { eps }
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn psi(&self, r: f64) -> f64 {
        let e = self.eps;
        if r <= 0.0 {
            0.0
        } else if r >= 2.0 * e {
            (r - e) / e
        } else {
            blend_integral(r / e)
        }
    }

    /// `ln ψ_ε(r)` for `r > 0`; finite wherever `ψ_ε(r) > 0` mathematically.
    pub fn ln_psi(&self, r: f64) -> f64 {
        if r <= 0.0 {
            f64::NEG_INFINITY
        } else if r >= 2.0 * self.eps {
            self.psi(r).ln()
        } else {
            ln_blend_integral(r / self.eps)
        }
    }

    pub fn psi_prime(&self, r: f64) -> f64 {
        let e = self.eps;
        if r <= 0.0 {
            0.0
        } else if r >= 2.0 * e {
            1.0 / e
        } else {
            blend(r / e) / e
        }
    }

    pub fn psi_double_prime(&self, r: f64) -> f64 {
        let e = self.eps;
        if r <= 0.0 || r >= 2.0 * e {
            0.0
        } else {
            blend_prime(r / e) / (e * e)
        }
    }

    /// Radial Legendre transform `sup_{m ≥ 0} { m·η − ψ_ε(m² − g²) }`.
    pub fn legendre(&self, g: f64, eta_norm: f64) -> f64 {
        self.legendre_argmax(g, eta_norm).1
    }

    /// `(argmax m, value)` of the radial Legendre transform.
    pub fn legendre_argmax(&self, g: f64, eta_norm: f64) -> (f64, f64) {
        if eta_norm <= 0.0 {
            return (0.0, 0.0);
        }
        let g2 = g * g;
        // Past max(√(g²+2ε), ηε/2) the slope η − 2m/ε is negative.
        let m_max = (g2 + 2.0 * self.eps).sqrt().max(0.5 * eta_norm * self.eps) + 1.0;
        let obj = |m: f64| m * eta_norm - self.psi(m * m - g2);
        let (m, v) = golden_section_max(obj, 0.0, m_max, 1e-10);
        // The objective is linear on [0, g], so the kink at g is a candidate too.
        let at_g = obj(g);
        if at_g > v {
            (g, at_g)
        } else {
            (m, v)
        }
    }
}

/// Legendre transform as a free function.
pub fn legendre(pf: &PenaltyFn, g_at_x: f64, eta_norm: f64) -> f64 {
    pf.legendre(g_at_x, eta_norm)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn branch_values() {
        let p = PenaltyFn::new(0.1);
        assert_eq!(p.psi(-5.0), 0.0);
        assert!((p.psi(0.3) - 2.0).abs() < 1e-14);
        assert_eq!(p.psi_prime(-1.0), 0.0);
        assert!((p.psi_prime(0.3) - 10.0).abs() < 1e-12);
        assert!((p.psi_prime(0.1) - 5.0).abs() < 1e-12);
    }

    #[test]
    fn half_integral_against_simpson() {
        let p = PenaltyFn::new(0.1);
        let oracle = crate::numerics::adaptive_simpson(&blend, 0.0, 1.0, 1e-13);
        let v = p.psi(0.1);
        assert!((v - oracle).abs() < 1e-11, "{v} vs {oracle}");
        assert!(v > 0.0 && v < 0.5);
    }

    #[test]
    fn seams_are_continuous() {
        for eps in [0.5, 0.1, 0.02] {
            let p = PenaltyFn::new(eps);
            let below = p.psi(2.0 * eps * (1.0 - 1e-12));
            assert!((below - 1.0).abs() < 1e-9);
            assert!((p.psi_prime(2.0 * eps * (1.0 - 1e-9)) - 1.0 / eps).abs() < 1e-6 / eps);
        }
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let p = PenaltyFn::new(0.1);
        let d = 1e-6;
        for i in 0..2000 {
            let r = -1.0 + 2.0 * i as f64 / 1999.0;
            let fd = (p.psi(r + d) - p.psi(r - d)) / (2.0 * d);
            assert!((fd - p.psi_prime(r)).abs() < 1e-6 / 0.1 * 10.0, "r = {r}");
        }
    }

    #[test]
    fn log_form_matches_direct_quadrature() {
        for x in [0.02f64, 0.03, 0.045] {
            let direct = crate::numerics::GaussRule::new(64).integrate((x - 40.0 * x * x).max(0.0), x, blend).ln();
            let l = ln_blend_integral(x);
            assert!((l - direct).abs() < 1e-8 * direct.abs(), "x = {x}: {l} vs {direct}");
        }
        assert!(ln_blend_integral(1e-6).is_finite());
        assert!(PenaltyFn::new(0.5).ln_psi(1e-4).is_finite());
    }

    #[test]
    fn legendre_examples() {
        let p = PenaltyFn::new(0.1);
        assert_eq!(p.legendre(1.0, 0.0), 0.0);
        // small η: optimum at m = g
        let v = p.legendre(1.0, 0.01);
        let scan = (0..100_000)
            .map(|i| {
                let m = 3.0 * i as f64 / 99_999.0;
                m * 0.01 - p.psi(m * m - 1.0)
            })
            .fold(f64::NEG_INFINITY, f64::max);
        assert!((v - scan).abs() < 1e-8);
        assert!(v >= 0.01 - 1e-15);
    }

    #[test]
    fn fenchel_equality_at_matched_pair() {
        let p = PenaltyFn::new(0.1);
        let g = 0.5;
        for m0 in [0.2, 0.5, 0.52, 0.6, 1.0, 3.0] {
            let eta = 2.0 * p.psi_prime(m0 * m0 - g * g) * m0;
            let lhs = p.psi(m0 * m0 - g * g);
            let rhs = m0 * eta - p.legendre(g, eta);
            assert!((lhs - rhs).abs() < 1e-6, "m0 = {m0}: {lhs} vs {rhs}");
        }
    }
}
