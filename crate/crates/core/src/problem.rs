//! A discretized problem: grid, assembled operator and nodal cost fields.

use std::sync::{Arc, OnceLock};

use thiserror::Error;

use crate::geometry::{Grid, SolutionField};
use crate::levy::{JumpDensity, LevyError, LevyModel, QuadratureRule};
use crate::operator::{assemble_linear_system, Coefficients, OperatorError, OperatorMatrix};

#[derive(Debug, Error, PartialEq)]
pub enum ProblemError {
    #[error(transparent)]
    Operator(#[from] OperatorError),
    #[error(transparent)]
    Levy(#[from] LevyError),
    #[error("{name} has {got} values but the grid has {expected} unknowns")]
    WrongLength { name: &'static str, expected: usize, got: usize },
}

/// Per-unknown lattice neighbours along each axis (`None` when the neighbour
/// is not an unknown and therefore holds zero).
#[derive(Debug, Clone)]
pub struct NeighbourTable {
    pub dim: usize,
    pub h: f64,
    pub nb: Vec<[[Option<usize>; 2]; 2]>,
}

impl NeighbourTable {
    pub fn new(grid: &Grid) -> Self {
        let nb = grid
            .interior_nodes()
            .iter()
            .map(|&node| {
                let mut row = [[None; 2]; 2];
                for (axis, slot) in row.iter_mut().enumerate().take(grid.dim()) {
                    for (k, step) in [-1isize, 1].into_iter().enumerate() {
                        slot[k] = grid
                            .neighbor(node, axis, step)
                            .filter(|&m| grid.is_interior(m))
                            .map(|m| grid.unknown_index(m));
                    }
                }
                row
            })
            .collect();
        NeighbourTable { dim: grid.dim(), h: grid.spacing(), nb }
    }

    fn value(u: &[f64], idx: Option<usize>) -> f64 {
        idx.map_or(0.0, |j| u[j])
    }

    /// Upwind squared gradient `Σ_axes max(0, D⁻u, −D⁺u)²` at unknown `i`,
    /// with the minimising neighbour per axis (for the Jacobian).
    pub fn godunov(&self, u: &[f64], i: usize) -> (f64, [Option<(Option<usize>, f64)>; 2]) {
        let mut p = 0.0;
        let mut active = [None, None];
        for axis in 0..self.dim {
            let [lo, hi] = self.nb[i][axis];
            let (vl, vh) = (Self::value(u, lo), Self::value(u, hi));
            let (which, vmin) = if vl <= vh { (lo, vl) } else { (hi, vh) };
            let s = (u[i] - vmin) / self.h;
            if s > 0.0 {
                p += s * s;
                active[axis] = Some((which, s));
            }
        }
        (p, active)
    }

    pub fn grad_norms(&self, u: &[f64]) -> Vec<f64> {
        (0..u.len()).map(|i| self.godunov(u, i).0.sqrt()).collect()
    }
}

/// Everything the solvers need, precomputed once per grid.
#[derive(Debug, Clone)]
pub struct Problem {
    pub grid: Arc<Grid>,
    pub coeffs: Coefficients,
    pub levy: LevyModel,
    pub density: JumpDensity,
    pub quad: QuadratureRule,
    pub matrix: OperatorMatrix,
    /// Running cost `h` per unknown.
    pub h_values: Vec<f64>,
    /// Constraint level `g` per unknown.
    pub g_values: Vec<f64>,
    pub neighbours: NeighbourTable,
    linear_solution: OnceLock<Vec<f64>>,
}

impl Problem {
    pub fn new(
        grid: Arc<Grid>,
        coeffs: Coefficients,
        levy: LevyModel,
        density: JumpDensity,
        quad: QuadratureRule,
    ) -> Result<Self, ProblemError> {
        let matrix = assemble_linear_system(&coeffs, &levy, &density, &quad, grid.clone())?;
        let coords: Vec<Vec<f64>> = grid.interior_nodes().iter().map(|&n| grid.coords(n)).collect();
        let h_values = coords.iter().map(|x| coeffs.h_at(x)).collect();
        let g_values = coords.iter().map(|x| coeffs.g_at(x)).collect();
        let neighbours = NeighbourTable::new(&grid);
        Ok(Problem {
            grid,
            coeffs,
            levy,
            density,
            quad,
            matrix,
            h_values,
            g_values,
            neighbours,
            linear_solution: OnceLock::new(),
        })
    }

    /// Replace the nodal running cost, e.g. with a manufactured right-hand side.
    pub fn with_rhs(mut self, h_values: Vec<f64>) -> Result<Self, ProblemError> {
        if h_values.len() != self.n() {
            return Err(ProblemError::WrongLength { name: "h", expected: self.n(), got: h_values.len() });
        }
        self.h_values = h_values;
        self.linear_solution = OnceLock::new();
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.grid.n_interior()
    }

    pub fn h_field(&self) -> SolutionField {
        SolutionField::from_interior(self.grid.clone(), &self.h_values)
    }

    pub fn g_field(&self) -> SolutionField {
        SolutionField::from_interior(self.grid.clone(), &self.g_values)
    }

    pub fn h_sup(&self) -> f64 {
        crate::linalg::sup_norm(&self.h_values)
    }

    pub(crate) fn cached_linear_solution(&self) -> Option<&Vec<f64>> {
        self.linear_solution.get()
    }

    pub(crate) fn store_linear_solution(&self, v: Vec<f64>) -> &Vec<f64> {
        self.linear_solution.get_or_init(|| v)
    }
}
