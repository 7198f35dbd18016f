//! ε-continuation towards the gradient-constrained equation
//! `max{Γu − h, |Du| − g} = 0`, with complementarity residuals.

use serde::Serialize;
use thiserror::Error;

use crate::geometry::SolutionField;
use crate::linalg::sup_norm;
use crate::nidd::{solve_nidd_from, NiddError, NiddReport, SolverOptions};
use crate::problem::Problem;

#[derive(Debug, Error)]
pub enum HjbError {
    #[error("eps schedule must be nonempty and strictly decreasing in (0, 1)")]
    InvalidSchedule,
    #[error("field lives on a different grid")]
    GridMismatch,
    #[error("solution increased by {violation:.3e} (> {tol:.3e}) when eps decreased to {eps}")]
    MonotonicityViolation { eps: f64, violation: f64, tol: f64, report: Box<HjbReport> },
    #[error("at eps = {eps}: {source}")]
    Nidd {
        eps: f64,
        #[source]
        source: NiddError,
        partial: Box<Option<HjbReport>>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NodeResidual {
    pub node: usize,
    pub x: Vec<f64>,
    pub u: f64,
    pub grad_norm: f64,
    /// `Γu − h`.
    pub r_pde: f64,
    /// `|Du| − g`.
    pub r_grad: f64,
    pub active: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HjbResidual {
    pub pde_pos: f64,
    pub grad_pos: f64,
    pub complementarity: f64,
    pub active_set_fraction: f64,
    pub activity_tol: f64,
    #[serde(skip)]
    pub per_node: Vec<NodeResidual>,
}

/// Residuals of the limit equation for a nodal field.
pub fn hjb_residual(problem: &Problem, field: &SolutionField) -> Result<HjbResidual, HjbError> {
    if **field.grid() != *problem.grid {
        return Err(HjbError::GridMismatch);
    }
    let u = field.interior_values();
    let gu = problem.matrix.apply(&u);
    let grads = problem.neighbours.grad_norms(&u);
    let activity_tol = 1e-6f64.max(5.0 * problem.grid.spacing());
    let mut pde_pos = 0.0f64;
    let mut grad_pos = 0.0f64;
    let mut comp = 0.0f64;
    let mut active = 0usize;
    let mut per_node = Vec::with_capacity(u.len());
    for (k, &node) in problem.grid.interior_nodes().iter().enumerate() {
        let r1 = gu[k] - problem.h_values[k];
        let r2 = grads[k] - problem.g_values[k];
        pde_pos = pde_pos.max(r1.max(0.0));
        grad_pos = grad_pos.max(r2.max(0.0));
        comp = comp.max((-r1).min(-r2).abs());
        let is_active = r2 >= -activity_tol;
        active += is_active as usize;
        per_node.push(NodeResidual {
            node,
            x: problem.grid.coords(node),
            u: u[k],
            grad_norm: grads[k],
            r_pde: r1,
            r_grad: r2,
            active: is_active,
        });
    }
    Ok(HjbResidual {
        pde_pos,
        grad_pos,
        complementarity: comp,
        active_set_fraction: active as f64 / u.len().max(1) as f64,
        activity_tol,
        per_node,
    })
}

/// Acceptance levels for the limit residuals.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HjbTolerances {
    pub pde: f64,
    pub grad: f64,
    pub complementarity: f64,
}

impl HjbTolerances {
    pub fn for_problem(problem: &Problem) -> Self {
        let hs = 1.0 + problem.h_sup();
        HjbTolerances { pde: 1e-5 * hs, grad: 5.0 * problem.grid.spacing(), complementarity: 1e-4 * hs }
    }

    pub fn met_by(&self, r: &HjbResidual) -> bool {
        r.pde_pos <= self.pde && r.grad_pos <= self.grad && r.complementarity <= self.complementarity
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HjbOptions {
    pub solver: SolverOptions,
    /// Stop once the residuals meet [`HjbTolerances`] or stagnate.
    pub early_stop: bool,
    /// Relative change in complementarity below which the run counts as stagnated.
    pub stagnation_tol: f64,
}

impl Default for HjbOptions {
    fn default() -> Self {
        HjbOptions { solver: SolverOptions::default(), early_stop: true, stagnation_tol: 1e-3 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpsStep {
    pub eps: f64,
    pub iterations: usize,
    /// `‖u_k − u_{k−1}‖∞`.
    pub sup_update: f64,
    /// `sup(u_k − u_{k−1})`, zero for the first entry.
    pub monotonicity_violation: f64,
    pub mono_tol: f64,
    pub nidd_residual: f64,
    pub pde_pos: f64,
    pub grad_pos: f64,
    pub complementarity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HjbReport {
    #[serde(skip)]
    pub solution: Option<SolutionField>,
    pub eps_trace: Vec<EpsStep>,
    pub final_eps: f64,
    pub residual_pde_pos: f64,
    pub residual_grad_pos: f64,
    pub complementarity: f64,
    pub active_set_fraction: f64,
    pub min_value: f64,
    pub max_value: f64,
    pub tolerances: HjbTolerances,
    pub stopped_early: bool,
    #[serde(skip)]
    pub last_nidd: Option<NiddReport>,
}

impl HjbReport {
    pub fn solution(&self) -> &SolutionField {
        self.solution.as_ref().expect("report carries its solution")
    }
}

/// `10⁻⁶(1 + ‖u‖∞) + 10 h²`.
pub fn mono_tol(u_sup: f64, spacing: f64) -> f64 {
    1e-6 * (1.0 + u_sup) + 10.0 * spacing * spacing
}

/// Solve along a decreasing ε schedule with warm starts.
pub fn solve_hjb(problem: &Problem, eps_schedule: &[f64], opts: &HjbOptions) -> Result<HjbReport, HjbError> {
    if eps_schedule.is_empty()
        || eps_schedule.iter().any(|e| !(*e > 0.0 && *e < 1.0))
        || eps_schedule.windows(2).any(|w| w[1] >= w[0])
    {
        return Err(HjbError::InvalidSchedule);
    }
    let tols = HjbTolerances::for_problem(problem);
    let spacing = problem.grid.spacing();
    let mut trace: Vec<EpsStep> = Vec::new();
    let mut prev: Option<Vec<f64>> = None;
    let mut report: Option<HjbReport> = None;
    for &eps in eps_schedule {
        let nidd = match solve_nidd_from(problem, eps, &opts.solver, prev.as_deref()) {
            Ok(r) => r,
            Err(source) => return Err(HjbError::Nidd { eps, source, partial: Box::new(report) }),
        };
        let sol = nidd.solution().clone();
        let u = sol.interior_values();
        let res = hjb_residual(problem, &sol)?;
        let tol = mono_tol(sup_norm(&u), spacing);
        let (sup_update, violation) = match &prev {
            None => (0.0, 0.0),
            Some(p) => {
                let diff: Vec<f64> = u.iter().zip(p).map(|(a, b)| a - b).collect();
                (sup_norm(&diff), diff.iter().copied().fold(0.0, f64::max))
            }
        };
        trace.push(EpsStep {
            eps,
            iterations: nidd.iterations,
            sup_update,
            monotonicity_violation: violation,
            mono_tol: tol,
            nidd_residual: nidd.residual_sup,
            pde_pos: res.pde_pos,
            grad_pos: res.grad_pos,
            complementarity: res.complementarity,
        });
        let stagnated = trace.len() >= 2 && {
            let a = trace[trace.len() - 2].complementarity;
            let b = res.complementarity;
            (a - b).abs() <= opts.stagnation_tol * b.max(f64::MIN_POSITIVE) && tols.met_by(&res)
        };
        let met = tols.met_by(&res);
        let current = HjbReport {
            solution: Some(sol),
            eps_trace: trace.clone(),
            final_eps: eps,
            residual_pde_pos: res.pde_pos,
            residual_grad_pos: res.grad_pos,
            complementarity: res.complementarity,
            active_set_fraction: res.active_set_fraction,
            min_value: nidd.min_value,
            max_value: nidd.max_value,
            tolerances: tols,
            stopped_early: false,
            last_nidd: Some(nidd),
        };
        if violation > tol {
            return Err(HjbError::MonotonicityViolation { eps, violation, tol, report: Box::new(current) });
        }
        prev = Some(u);
        let last = eps == *eps_schedule.last().expect("nonempty");
        report = Some(current);
        if opts.early_stop && !last && (met || stagnated) {
            if let Some(r) = report.as_mut() {
                r.stopped_early = true;
            }
            break;
        }
    }
    Ok(report.expect("schedule is nonempty"))
}

pub const DEFAULT_EPS_SCHEDULE: [f64; 6] = [0.5, 0.25, 0.1, 0.05, 0.02, 0.01];

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_grid, Domain};
    use crate::levy::{JumpDensity, LevyModel, QuadratureRule};
    use crate::nidd::solve_linear_dirichlet;
    use crate::operator::Coefficients;
    use std::sync::Arc;

    fn problem(h: f64, g: f64, spacing: f64) -> Problem {
        let grid = Arc::new(build_grid(&Domain::new_box(vec![-1.0], vec![1.0]).unwrap(), spacing).unwrap());
        Problem::new(
            grid,
            Coefficients::constant(1.0, 0.0, 1.0, h, g),
            LevyModel::default(),
            JumpDensity::default(),
            QuadratureRule::empty(),
        )
        .unwrap()
    }

    #[test]
    fn zero_cost() {
        let p = problem(0.0, 1.0, 1.0 / 16.0);
        let r = solve_hjb(&p, &DEFAULT_EPS_SCHEDULE, &HjbOptions::default()).unwrap();
        assert_eq!(r.solution().sup_norm(), 0.0);
        assert_eq!(r.complementarity, 0.0);
    }

    #[test]
    fn zero_field_residuals() {
        let p = problem(2.0, 0.5, 1.0 / 16.0);
        let r = hjb_residual(&p, &SolutionField::zeros(p.grid.clone())).unwrap();
        assert_eq!(r.pde_pos, 0.0);
        assert_eq!(r.grad_pos, 0.0);
        assert_eq!(r.complementarity, 0.5);
    }

    #[test]
    fn unconstrained_collapses_to_linear() {
        let p = problem(2.0, 10.0, 1.0 / 32.0);
        let r = solve_hjb(&p, &DEFAULT_EPS_SCHEDULE, &HjbOptions::default()).unwrap();
        let lin = solve_linear_dirichlet(&p.matrix, &p.h_field()).unwrap();
        let d = r.solution().values().iter().zip(lin.values()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(d < 1e-8);
        assert_eq!(r.residual_grad_pos, 0.0);
        assert!(r.complementarity <= 1e-6);
        assert!(r.stopped_early);
    }

    #[test]
    fn tight_constraint_is_active() {
        let p = problem(10.0, 0.5, 1.0 / 32.0);
        let schedule = [0.5, 0.25, 0.1, 0.05, 0.02, 0.01, 1e-3, 1e-4, 1e-5];
        let r = solve_hjb(&p, &schedule, &HjbOptions::default()).unwrap();
        assert!(r.active_set_fraction > 0.0);
        assert!(r.residual_grad_pos <= 5.0 / 32.0);
        for w in r.eps_trace.windows(2) {
            assert!(w[1].monotonicity_violation <= w[1].mono_tol);
        }
    }

    #[test]
    fn schedule_must_decrease() {
        let p = problem(1.0, 1.0, 1.0 / 8.0);
        assert!(matches!(solve_hjb(&p, &[0.1, 0.2], &HjbOptions::default()), Err(HjbError::InvalidSchedule)));
    }
}
