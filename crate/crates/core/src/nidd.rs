//! The penalized problem `Γu + ψ_ε(|Du|² − g²) = h`, `u = 0` outside the domain.
//!
//! `|Du|²` is discretized by the upwind (Godunov) form
//! `Σ_axes max(0, D⁻u, −D⁺u)²`, which is nondecreasing in the centre value and
//! nonincreasing in the neighbours. Together with the M-matrix `Γ_h` this keeps
//! the discrete problem monotone, so the comparison principle, the bounds
//! `0 ≤ u ≤ Γ_h⁻¹h` and the monotonicity in ε carry over exactly.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::SolutionField;
use crate::linalg::{sup_diff, sup_norm, BandedLu, LinalgError};
use crate::operator::{merge_row, OperatorMatrix};
use crate::penalty::PenaltyFn;
use crate::problem::Problem;

#[derive(Debug, Error)]
pub enum NiddError {
    #[error("eps must lie in (0, 1), got {0}")]
    InvalidEps(f64),
    #[error(transparent)]
    Linear(#[from] LinalgError),
    #[error("nonlocal splitting failed to contract (estimated rate {rate:.3e}) after {iterations} inner iterations")]
    InnerDivergence { rate: f64, iterations: usize },
    #[error("no convergence after {} iterations (update {:.3e}, residual {:.3e})", .0.iterations, .0.final_update_norm, .0.residual_sup)]
    MaxIterationsExceeded(Box<NiddReport>),
    #[error("solution leaves [0, C1] = [0, {c1:.6e}]: min {min:.6e}, max {max:.6e}")]
    BoundViolation { min: f64, max: f64, c1: f64, report: Box<NiddReport> },
    #[error("fields live on different grids")]
    GridMismatch,
    #[error("field has {got} values, the grid has {expected} unknowns")]
    WrongLength { expected: usize, got: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Newton,
    Picard,
}

/// How the nonlocal part enters linear solves.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NonlocalMode {
    /// Entries inside the local bandwidth are factored, the rest lagged.
    Lagged,
    /// Every entry is factored (the band grows to the jump reach).
    Folded,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverOptions {
    /// Relative update tolerance, scaled by `1 + ‖u‖∞`.
    pub tol_update: f64,
    /// Relative residual tolerance, scaled by `1 + ‖h‖∞`.
    pub tol_res: f64,
    pub max_iter: usize,
    /// Initial Picard damping.
    pub damping: f64,
    pub method: Method,
    pub nonlocal: NonlocalMode,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            tol_update: 1e-8,
            tol_res: 1e-6,
            max_iter: 500,
            damping: 0.7,
            method: Method::Newton,
            nonlocal: NonlocalMode::Lagged,
        }
    }
}

const INNER_TOL: f64 = 1e-12;
const INNER_MAX_ITER: usize = 20_000;

/// Factored near part plus lagged far part of `A − N`.
struct SplitSolver {
    lu: BandedLu,
    far: Vec<Vec<(usize, f64)>>,
}

impl SplitSolver {
    /// `near(i)` is row `i` of the local part (already including any diagonal
    /// additions); `nonlocal` is subtracted.
    fn new(
        n: usize,
        near: impl Fn(usize) -> Vec<(usize, f64)>,
        nonlocal: &[Vec<(usize, f64)>],
        mode: NonlocalMode,
    ) -> Result<Self, NiddError> {
        let rows: Vec<Vec<(usize, f64)>> = (0..n).map(&near).collect();
        let local_band = rows.iter().enumerate().flat_map(|(i, r)| r.iter().map(move |e| e.0.abs_diff(i))).max().unwrap_or(0);
        let band = match mode {
            NonlocalMode::Lagged => local_band.max(1),
            NonlocalMode::Folded => nonlocal
                .iter()
                .enumerate()
                .flat_map(|(i, r)| r.iter().map(move |e| e.0.abs_diff(i)))
                .max()
                .unwrap_or(0)
                .max(local_band)
                .max(1),
        };
        let mut far = vec![Vec::new(); n];
        let mut merged = rows;
        for (i, row) in nonlocal.iter().enumerate() {
            for &(c, w) in row {
                if c.abs_diff(i) <= band {
                    merged[i].push((c, -w));
                } else {
                    far[i].push((c, w));
                }
            }
        }
        let merged: Vec<Vec<(usize, f64)>> = merged.into_iter().map(merge_row).collect();
        let lu = BandedLu::factor(n, band, |i| merged[i].clone())?;
        Ok(SplitSolver { lu, far })
    }

    fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>, NiddError> {
        let mut x = self.lu.solve(rhs);
        if self.far.iter().all(Vec::is_empty) {
            return Ok(x);
        }
        let mut prev_step = f64::INFINITY;
        let mut rate = 0.0;
        for it in 0..INNER_MAX_ITER {
            let mut b = rhs.to_vec();
            for (i, row) in self.far.iter().enumerate() {
                for &(c, w) in row {
                    b[i] += w * x[c];
                }
            }
            let next = self.lu.solve(&b);
            let step = sup_diff(&next, &x);
            x = next;
            if step <= INNER_TOL * (1.0 + sup_norm(&x)) {
                return Ok(x);
            }
            if prev_step.is_finite() && prev_step > 0.0 {
                rate = step / prev_step;
            }
            if !step.is_finite() || (it > 20 && rate >= 1.0) {
                return Err(NiddError::InnerDivergence { rate, iterations: it + 1 });
            }
            prev_step = step;
        }
        Err(NiddError::InnerDivergence { rate, iterations: INNER_MAX_ITER })
    }
}

fn solve_with(matrix: &OperatorMatrix, rhs: &[f64], mode: NonlocalMode) -> Result<Vec<f64>, NiddError> {
    let n = matrix.n();
    let near = |i: usize| {
        let mut r: Vec<(usize, f64)> = matrix.local.row(i).collect();
        r.push((i, matrix.mass[i]));
        r
    };
    let solver = SplitSolver::new(n, near, &matrix.nonlocal, mode)?;
    solver.solve(rhs)
}

/// Solve `Γ_h u = rhs` at interior nodes with `u = 0` elsewhere.
pub fn solve_linear_dirichlet(matrix: &OperatorMatrix, rhs: &SolutionField) -> Result<SolutionField, NiddError> {
    solve_linear_dirichlet_with(matrix, rhs, NonlocalMode::Lagged)
}

pub fn solve_linear_dirichlet_with(
    matrix: &OperatorMatrix,
    rhs: &SolutionField,
    mode: NonlocalMode,
) -> Result<SolutionField, NiddError> {
    if **rhs.grid() != *matrix.grid {
        return Err(NiddError::GridMismatch);
    }
    let u = solve_with(matrix, &rhs.interior_values(), mode)?;
    Ok(SolutionField::from_interior(matrix.grid.clone(), &u))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NiddReport {
    #[serde(skip)]
    pub solution: Option<SolutionField>,
    pub eps: f64,
    pub method: Method,
    pub iterations: usize,
    pub final_update_norm: f64,
    pub residual_sup: f64,
    /// `‖T[u] − u‖∞` for the linearization map `T`.
    pub fixed_point_defect: f64,
    /// `‖Γ_h⁻¹ h‖∞`.
    pub bound_c1: f64,
    pub min_value: f64,
    pub max_value: f64,
    pub grad_sup: f64,
    pub converged: bool,
}

impl NiddReport {
    pub fn solution(&self) -> &SolutionField {
        self.solution.as_ref().expect("report carries its solution")
    }
}

/// The discrete nonlinear map and its pieces for one ε.
pub struct NiddSystem<'a> {
    pub problem: &'a Problem,
    pub penalty: PenaltyFn,
    clamp: f64,
}

impl<'a> NiddSystem<'a> {
    pub fn new(problem: &'a Problem, eps: f64) -> Result<Self, NiddError> {
        if !(eps > 0.0 && eps < 1.0) {
            return Err(NiddError::InvalidEps(eps));
        }
        let gmax = problem.g_values.iter().fold(0.0f64, |m, g| m.max(g.abs()));
        Ok(NiddSystem { problem, penalty: PenaltyFn::new(eps), clamp: -gmax * gmax - 1.0 })
    }

    fn arg(&self, p: f64, i: usize) -> f64 {
        let g = self.problem.g_values[i];
        (p - g * g).max(self.clamp)
    }

    /// `ψ_ε(P(u) − g²)` per unknown.
    pub fn penalty_term(&self, u: &[f64]) -> Vec<f64> {
        let nb = &self.problem.neighbours;
        (0..u.len()).map(|i| self.penalty.psi(self.arg(nb.godunov(u, i).0, i))).collect()
    }

    /// `F(u) = Γ_h u + ψ_ε(P(u) − g²) − h`.
    pub fn residual(&self, u: &[f64]) -> Vec<f64> {
        let gu = self.problem.matrix.apply(u);
        let pen = self.penalty_term(u);
        gu.iter().zip(&pen).zip(&self.problem.h_values).map(|((a, b), h)| a + b - h).collect()
    }

    /// The linearization map `T[w] = Γ_h⁻¹ (h − ψ_ε(P(w) − g²))`.
    pub fn t_map(&self, w: &[f64], mode: NonlocalMode) -> Result<Vec<f64>, NiddError> {
        let pen = self.penalty_term(w);
        let rhs: Vec<f64> = self.problem.h_values.iter().zip(&pen).map(|(h, p)| h - p).collect();
        solve_with(&self.problem.matrix, &rhs, mode)
    }

    /// Newton direction: solve `J(u) du = −F(u)`.
    fn newton_step(&self, u: &[f64], f: &[f64], mode: NonlocalMode) -> Result<Vec<f64>, NiddError> {
        let m = &self.problem.matrix;
        let nb = &self.problem.neighbours;
        let h = nb.h;
        let near = |i: usize| {
            let mut r: Vec<(usize, f64)> = m.local.row(i).collect();
            r.push((i, m.mass[i]));
            let (p, active) = nb.godunov(u, i);
            let dpsi = self.penalty.psi_prime(self.arg(p, i));
            if dpsi > 0.0 {
                for &(j, s) in active.iter().flatten() {
                    let d = dpsi * 2.0 * s / h;
                    r.push((i, d));
                    if let Some(j) = j {
                        r.push((j, -d));
                    }
                }
            }
            r
        };
        let solver = SplitSolver::new(m.n(), near, &m.nonlocal, mode)?;
        let neg: Vec<f64> = f.iter().map(|v| -v).collect();
        solver.solve(&neg)
    }
}

/// `C₁ = ‖Γ_h⁻¹ h‖∞` and the nodal solution of the linear problem.
pub fn linear_bound(problem: &Problem, mode: NonlocalMode) -> Result<&Vec<f64>, NiddError> {
    if let Some(v) = problem.cached_linear_solution() {
        return Ok(v);
    }
    let v = solve_with(&problem.matrix, &problem.h_values, mode)?;
    Ok(problem.store_linear_solution(v))
}

/// Solve the penalized problem at one ε, starting from zero.
pub fn solve_nidd(problem: &Problem, eps: f64, opts: &SolverOptions) -> Result<NiddReport, NiddError> {
    solve_nidd_from(problem, eps, opts, None)
}

/// Solve the penalized problem at one ε from an optional initial guess.
pub fn solve_nidd_from(
    problem: &Problem,
    eps: f64,
    opts: &SolverOptions,
    initial: Option<&[f64]>,
) -> Result<NiddReport, NiddError> {
    let sys = NiddSystem::new(problem, eps)?;
    let n = problem.n();
    let mut u = match initial {
        Some(v) if v.len() != n => return Err(NiddError::WrongLength { expected: n, got: v.len() }),
        Some(v) => v.to_vec(),
        None => vec![0.0; n],
    };
    let res_tol = opts.tol_res * (1.0 + problem.h_sup());
    let mut f = sys.residual(&u);
    let mut res = sup_norm(&f);
    let mut update = f64::INFINITY;
    let mut damping = opts.damping;
    let mut iterations = 0;
    let mut defect = f64::NAN;
    let mut converged = false;
    let mut best: (f64, Vec<f64>) = (res, u.clone());

    while iterations < opts.max_iter {
        let upd_tol = opts.tol_update * (1.0 + sup_norm(&u));
        if update <= upd_tol && res <= res_tol {
            let t = sys.t_map(&u, opts.nonlocal)?;
            defect = sup_diff(&t, &u);
            if defect <= upd_tol {
                converged = true;
                break;
            }
        }
        iterations += 1;
        let next = match opts.method {
            Method::Newton => {
                let du = sys.newton_step(&u, &f, opts.nonlocal)?;
                u.iter().zip(&du).map(|(a, b)| a + b).collect::<Vec<f64>>()
            }
            Method::Picard => {
                let t = sys.t_map(&u, opts.nonlocal)?;
                u.iter().zip(&t).map(|(a, b)| (1.0 - damping) * a + damping * b).collect()
            }
        };
        let f_next = sys.residual(&next);
        let res_next = sup_norm(&f_next);
        if !res_next.is_finite() {
            break;
        }
        if opts.method == Method::Picard && res_next > res {
            damping = (0.5 * damping).max(1e-3);
        }
        update = sup_diff(&next, &u);
        u = next;
        f = f_next;
        res = res_next;
        if res < best.0 {
            best = (res, u.clone());
        }
    }

    let grid = problem.grid.clone();
    let c1 = sup_norm(linear_bound(problem, opts.nonlocal)?);
    let final_u = if converged { u } else { best.1 };
    let final_res = sup_norm(&sys.residual(&final_u));
    if defect.is_nan() {
        defect = sup_diff(&sys.t_map(&final_u, opts.nonlocal)?, &final_u);
    }
    let grads = problem.neighbours.grad_norms(&final_u);
    let field = SolutionField::from_interior(grid, &final_u);
    let report = NiddReport {
        eps,
        method: opts.method,
        iterations,
        final_update_norm: update,
        residual_sup: final_res,
        fixed_point_defect: defect,
        bound_c1: c1,
        min_value: final_u.iter().copied().fold(f64::INFINITY, f64::min),
        max_value: final_u.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        grad_sup: grads.iter().copied().fold(0.0, f64::max),
        converged,
        solution: Some(field),
    };
    if !converged {
        return Err(NiddError::MaxIterationsExceeded(Box::new(report)));
    }
    let tol = 1e-8 * (1.0 + c1);
    if report.min_value < -tol || report.max_value > c1 + tol {
        return Err(NiddError::BoundViolation {
            min: report.min_value,
            max: report.max_value,
            c1,
            report: Box::new(report),
        });
    }
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum ComparisonOutcome {
    Checked { ok: bool, max_violation: f64 },
    /// The premise failed: `phi` is not a super-solution or `eta` is not a
    /// sub-solution at `node` (lattice index).
    NotApplicable { node: usize, which: &'static str, excess: f64 },
}

/// Check `φ ≤ η` for a super-solution `φ` (`Γφ + ψ ≤ h`) and a sub-solution `η`
/// (`Γη + ψ ≥ h`), after verifying both premises node-wise.
pub fn comparison_check(
    problem: &Problem,
    eps: f64,
    phi: &SolutionField,
    eta: &SolutionField,
    tol: f64,
) -> Result<ComparisonOutcome, NiddError> {
    if **phi.grid() != *problem.grid || **eta.grid() != *problem.grid {
        return Err(NiddError::GridMismatch);
    }
    let sys = NiddSystem::new(problem, eps)?;
    let pv = phi.interior_values();
    let ev = eta.interior_values();
    let fp = sys.residual(&pv);
    let fe = sys.residual(&ev);
    let slack = 1e-10 * (1.0 + problem.h_sup());
    for (k, &node) in problem.grid.interior_nodes().iter().enumerate() {
        if fp[k] > slack {
            return Ok(ComparisonOutcome::NotApplicable { node, which: "phi", excess: fp[k] });
        }
        if fe[k] < -slack {
            return Ok(ComparisonOutcome::NotApplicable { node, which: "eta", excess: -fe[k] });
        }
    }
    let max_violation = pv.iter().zip(&ev).map(|(a, b)| a - b).fold(f64::NEG_INFINITY, f64::max).max(0.0);
    Ok(ComparisonOutcome::Checked { ok: max_violation <= tol, max_violation })
}
