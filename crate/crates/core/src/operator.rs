//! Discrete `Γ = L − I` on a grid.
//!
//! `L u = −tr[a D²u] + ⟨b, Du⟩ + c u` uses central second differences, the
//! seven-point cross stencil in 2D and upwinded first differences for the drift,
//! so every off-diagonal coefficient is nonpositive when `a11, a22 ≥ |a12|`.
//! `I u(x) = Σ_k w_k s(x, z_k) [u(x + z_k) − u(x)]` evaluates the shifted values
//! by multilinear interpolation with zero extension.

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::expr::Expr;
use crate::geometry::{Grid, SolutionField};
use crate::levy::{JumpDensity, LevyModel, QuadratureRule};
use crate::linalg::CsrMatrix;

#[derive(Debug, Error, PartialEq)]
pub enum OperatorError {
    #[error("fields live on different grids")]
    GridMismatch,
    #[error("stencil loses monotonicity at node {node} (x = {x:?}): {detail}")]
    EllipticityViolation { node: usize, x: Vec<f64>, detail: String },
    #[error("invalid coefficients: {0}")]
    InvalidCoefficients(String),
}

/// Diffusion matrix: a scalar multiple of the identity or a full `d×d` array.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TensorField {
    Scalar(Expr),
    Matrix(Vec<Vec<Expr>>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum VectorField {
    Scalar(Expr),
    Vector(Vec<Expr>),
}

fn zero() -> Expr {
    Expr::Const(0.0)
}

fn default_b() -> VectorField {
    VectorField::Scalar(zero())
}

fn default_theta() -> f64 {
    1e-8
}

/// Coefficient fields of the equation and the two cost fields.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Coefficients {
    pub a: TensorField,
    #[serde(default = "default_b")]
    pub b: VectorField,
    pub c: Expr,
    #[serde(rename = "h")]
    pub h_cost: Expr,
    #[serde(rename = "g")]
    pub g_cost: Expr,
    /// Declared ellipticity floor.
    #[serde(default = "default_theta")]
    pub theta: f64,
}

impl Coefficients {
    /// Constant coefficients: `a = a·I`, `b = b·(1, …, 1)`.
    pub fn constant(a: f64, b: f64, c: f64, h: f64, g: f64) -> Self {
        Coefficients {
            a: TensorField::Scalar(Expr::Const(a)),
            b: VectorField::Scalar(Expr::Const(b)),
            c: Expr::Const(c),
            h_cost: Expr::Const(h),
            g_cost: Expr::Const(g),
            theta: a.max(0.0),
        }
    }

    pub fn a_at(&self, x: &[f64]) -> [[f64; 2]; 2] {
        match &self.a {
            TensorField::Scalar(e) => {
                let v = e.eval(x);
                [[v, 0.0], [0.0, v]]
            }
            TensorField::Matrix(m) => {
                let mut out = [[0.0; 2]; 2];
                for (i, row) in m.iter().enumerate().take(2) {
                    for (j, e) in row.iter().enumerate().take(2) {
                        out[i][j] = e.eval(x);
                    }
                }
                out
            }
        }
    }

    pub fn b_at(&self, x: &[f64]) -> [f64; 2] {
        match &self.b {
            VectorField::Scalar(e) => {
                let v = e.eval(x);
                [v, v]
            }
            VectorField::Vector(v) => {
                let mut out = [0.0; 2];
                for (o, e) in out.iter_mut().zip(v) {
                    *o = e.eval(x);
                }
                out
            }
        }
    }

    pub fn c_at(&self, x: &[f64]) -> f64 {
        self.c.eval(x)
    }

    pub fn h_at(&self, x: &[f64]) -> f64 {
        self.h_cost.eval(x)
    }

    pub fn g_at(&self, x: &[f64]) -> f64 {
        self.g_cost.eval(x)
    }

    /// Shape checks against the spatial dimension.
    pub fn check_shapes(&self, dim: usize) -> Result<(), OperatorError> {
        if let TensorField::Matrix(m) = &self.a {
            if m.len() != dim || m.iter().any(|r| r.len() != dim) {
                return Err(OperatorError::InvalidCoefficients(format!("a must be a {dim}x{dim} matrix")));
            }
            if dim == 2 && m[0][1] != m[1][0] {
                return Err(OperatorError::InvalidCoefficients("a must be symmetric".into()));
            }
        }
        if let VectorField::Vector(v) = &self.b {
            if v.len() != dim {
                return Err(OperatorError::InvalidCoefficients(format!("b must have {dim} components")));
            }
        } else if dim == 2 {
            if let VectorField::Scalar(e) = &self.b {
                if e.as_const() != Some(0.0) {
                    return Err(OperatorError::InvalidCoefficients(
                        "b must be given as a vector in 2D".into(),
                    ));
                }
            }
        }
        let jump_vars = matches!(&self.a, TensorField::Scalar(e) if e.uses_jump_vars())
            || matches!(&self.a, TensorField::Matrix(m) if m.iter().flatten().any(Expr::uses_jump_vars))
            || matches!(&self.b, VectorField::Scalar(e) if e.uses_jump_vars())
            || matches!(&self.b, VectorField::Vector(v) if v.iter().any(Expr::uses_jump_vars))
            || [&self.c, &self.h_cost, &self.g_cost].iter().any(|e| e.uses_jump_vars());
        if jump_vars {
            return Err(OperatorError::InvalidCoefficients(
                "coefficients may only depend on x and y".into(),
            ));
        }
        Ok(())
    }
}

/// Stencil of `L` at lattice node `node`: `(lattice node, weight)` pairs,
/// including neighbours that are not unknowns (their value is zero).
pub fn local_stencil(coeffs: &Coefficients, grid: &Grid, node: usize) -> Vec<(usize, f64)> {
    let x = grid.coords(node);
    let h = grid.spacing();
    let h2 = h * h;
    let a = coeffs.a_at(&x);
    let b = coeffs.b_at(&x);
    let mut diag = coeffs.c_at(&x);
    let mut out = Vec::with_capacity(9);
    let nb = |axis: usize, step: isize| grid.neighbor(node, axis, step).expect("interior nodes have lattice neighbours");
    let m = if grid.dim() == 2 { a[0][1].abs() } else { 0.0 };
    for axis in 0..grid.dim() {
        let aii = a[axis][axis];
        let bi = b[axis];
        diag += 2.0 * aii / h2 + bi.abs() / h;
        out.push((nb(axis, -1), -aii / h2 - bi.max(0.0) / h + m / h2));
        out.push((nb(axis, 1), -aii / h2 - (-bi).max(0.0) / h + m / h2));
    }
    if m > 0.0 {
        diag -= 2.0 * m / h2;
        let [i, j] = grid.multi_index(node);
        let (p, q) = if a[0][1] > 0.0 { ((i + 1, j + 1), (i - 1, j - 1)) } else { ((i + 1, j - 1), (i - 1, j + 1)) };
        out.push((grid.node_at([p.0, p.1]), -m / h2));
        out.push((grid.node_at([q.0, q.1]), -m / h2));
    }
    out.push((node, diag));
    out
}

fn check_same(grid: &Grid, field: &SolutionField) -> Result<(), OperatorError> {
    if **field.grid() != *grid {
        return Err(OperatorError::GridMismatch);
    }
    Ok(())
}

/// `L u` at interior nodes; zero elsewhere.
pub fn apply_l(coeffs: &Coefficients, field: &SolutionField) -> SolutionField {
    let grid = field.grid().clone();
    let vals = field.values();
    field.map_interior(|node, _| local_stencil(coeffs, &grid, node).iter().map(|&(n, w)| w * vals[n]).sum())
}

/// Quadrature weights `w_k s(x, z_k)` at point `x`.
fn nonlocal_weights(quad: &QuadratureRule, s: &JumpDensity, x: &[f64]) -> Vec<f64> {
    quad.nodes.iter().map(|q| q.weight * s.eval(x, &q.z)).collect()
}

fn shifted(x: &[f64], z: &[f64]) -> Vec<f64> {
    x.iter().zip(z).map(|(a, b)| a + b).collect()
}

/// `Σ_k ω_k [F(x + z_k) − F(x)]` for an arbitrary zero-extended evaluator `F`.
fn nonlocal_at(quad: &QuadratureRule, s: &JumpDensity, x: &[f64], ext: impl Fn(&[f64]) -> f64) -> f64 {
    let here = ext(x);
    quad.nodes
        .iter()
        .map(|q| q.weight * s.eval(x, &q.z) * (ext(&shifted(x, &q.z)) - here))
        .sum()
}

/// `I u` at interior nodes; zero elsewhere.
pub fn apply_i(_levy: &LevyModel, s: &JumpDensity, quad: &QuadratureRule, field: &SolutionField) -> SolutionField {
    let grid = field.grid().clone();
    let vals = field.values();
    field.map_interior(|node, _| {
        let x = grid.coords(node);
        let here = vals[node];
        quad.nodes
            .iter()
            .map(|q| q.weight * s.eval(&x, &q.z) * (field.value_extended(&shifted(&x, &q.z)) - here))
            .sum()
    })
}

/// `Γ u = L u − I u` at interior nodes.
pub fn apply_gamma(
    coeffs: &Coefficients,
    levy: &LevyModel,
    s: &JumpDensity,
    quad: &QuadratureRule,
    field: &SolutionField,
) -> SolutionField {
    let l = apply_l(coeffs, field);
    let i = apply_i(levy, s, quad, field);
    let iv = i.values();
    l.map_interior(|node, v| v - iv[node])
}

/// Sup over interior nodes of `[w, v] − (I[wv] − w·Iv − v·Iw)`, where
/// `[w, v](x) = Σ_k ω_k (w(x+z_k) − w(x)) (v(x+z_k) − v(x))`.
pub fn bracket_identity_residual(
    _levy: &LevyModel,
    s: &JumpDensity,
    quad: &QuadratureRule,
    w: &SolutionField,
    v: &SolutionField,
) -> Result<f64, OperatorError> {
    if !w.same_grid(v) {
        return Err(OperatorError::GridMismatch);
    }
    let grid = w.grid();
    let mut worst = 0.0f64;
    for &node in grid.interior_nodes() {
        let x = grid.coords(node);
        let (w0, v0) = (w.value(node), v.value(node));
        let bracket: f64 = quad
            .nodes
            .iter()
            .map(|q| {
                let y = shifted(&x, &q.z);
                q.weight * s.eval(&x, &q.z) * (w.value_extended(&y) - w0) * (v.value_extended(&y) - v0)
            })
            .sum();
        let i_wv = nonlocal_at(quad, s, &x, |y| w.value_extended(y) * v.value_extended(y));
        let i_v = nonlocal_at(quad, s, &x, |y| v.value_extended(y));
        let i_w = nonlocal_at(quad, s, &x, |y| w.value_extended(y));
        worst = worst.max((bracket - (i_wv - w0 * i_v - v0 * i_w)).abs());
    }
    Ok(worst)
}

/// Assembled `Γ_h = local + diag(mass) − nonlocal` over the interior unknowns.
#[derive(Debug, Clone)]
pub struct OperatorMatrix {
    pub grid: Arc<Grid>,
    /// `L` restricted to unknowns.
    pub local: CsrMatrix,
    /// `Σ_k ω_k` per unknown.
    pub mass: Vec<f64>,
    /// Interpolation weights of the shifted points, per unknown, by unknown index.
    pub nonlocal: Vec<Vec<(usize, f64)>>,
    /// Number of quadrature nodes the nonlocal part was built from.
    pub quadrature_nodes: usize,
}

impl OperatorMatrix {
    pub fn n(&self) -> usize {
        self.local.n()
    }

    /// `Γ_h u` on a vector of unknowns.
    pub fn apply(&self, u: &[f64]) -> Vec<f64> {
        let mut out = self.local.matvec(u);
        for (i, o) in out.iter_mut().enumerate() {
            *o += self.mass[i] * u[i];
            for &(c, w) in &self.nonlocal[i] {
                *o -= w * u[c];
            }
        }
        out
    }

    pub fn apply_field(&self, field: &SolutionField) -> Result<SolutionField, OperatorError> {
        check_same(&self.grid, field)?;
        let out = self.apply(&field.interior_values());
        Ok(SolutionField::from_interior(self.grid.clone(), &out))
    }

    /// Row `i` of the full matrix, duplicates merged.
    pub fn full_row(&self, i: usize) -> Vec<(usize, f64)> {
        let mut row: Vec<(usize, f64)> = self.local.row(i).collect();
        row.push((i, self.mass[i]));
        row.extend(self.nonlocal[i].iter().map(|&(c, w)| (c, -w)));
        merge_row(row)
    }

    pub fn to_csr(&self) -> CsrMatrix {
        CsrMatrix::from_rows(self.n(), (0..self.n()).map(|i| self.full_row(i)).collect())
    }

    pub fn local_bandwidth(&self) -> usize {
        self.local.bandwidth()
    }
}

pub(crate) fn merge_row(mut row: Vec<(usize, f64)>) -> Vec<(usize, f64)> {
    row.sort_by_key(|e| e.0);
    let mut out: Vec<(usize, f64)> = Vec::with_capacity(row.len());
    for (c, v) in row {
        match out.last_mut() {
            Some(last) if last.0 == c => last.1 += v,
            _ => out.push((c, v)),
        }
    }
    out
}

/// Assemble the operator over the interior unknowns of `grid`.
pub fn assemble_linear_system(
    coeffs: &Coefficients,
    _levy: &LevyModel,
    s: &JumpDensity,
    quad: &QuadratureRule,
    grid: Arc<Grid>,
) -> Result<OperatorMatrix, OperatorError> {
    coeffs.check_shapes(grid.dim())?;
    let n = grid.n_interior();
    let mut rows = Vec::with_capacity(n);
    let mut mass = Vec::with_capacity(n);
    let mut nonlocal = Vec::with_capacity(n);
    for (k, &node) in grid.interior_nodes().iter().enumerate() {
        let x = grid.coords(node);
        let stencil = local_stencil(coeffs, &grid, node);
        let c = coeffs.c_at(&x);
        let mut diag = 0.0;
        let mut off_abs = 0.0;
        for &(m, w) in &stencil {
            if m == node {
                diag += w;
                continue;
            }
            let scale = 1e-12 * w.abs().max(1.0);
            if w > scale {
                return Err(OperatorError::EllipticityViolation {
                    node,
                    x,
                    detail: format!("positive off-diagonal {w:e}; need a11, a22 >= |a12| and a well-resolved drift"),
                });
            }
            off_abs += w.abs();
        }
        if !(c >= 0.0) || diag < off_abs + c - 1e-9 * diag.abs().max(1.0) || !(diag > 0.0) {
            return Err(OperatorError::EllipticityViolation {
                node,
                x,
                detail: format!("diagonal {diag:e} below off-diagonal sum {off_abs:e} plus c = {c:e}"),
            });
        }
        rows.push(
            stencil
                .iter()
                .filter(|(m, _)| grid.is_interior(*m))
                .map(|&(m, w)| (grid.unknown_index(m), w))
                .collect::<Vec<_>>(),
        );
        let omega = nonlocal_weights(quad, s, &x);
        mass.push(omega.iter().sum());
        let mut row = Vec::new();
        for (q, om) in quad.nodes.iter().zip(&omega) {
            if *om == 0.0 {
                continue;
            }
            if let Some(st) = grid.interpolation_stencil(&shifted(&x, &q.z)) {
                for (m, w) in st {
                    if grid.is_interior(m) && w != 0.0 {
                        row.push((grid.unknown_index(m), om * w));
                    }
                }
            }
        }
        nonlocal.push(merge_row(row));
        debug_assert_eq!(k + 1, rows.len());
    }
    Ok(OperatorMatrix {
        grid: grid.clone(),
        local: CsrMatrix::from_rows(n, rows),
        mass,
        nonlocal,
        quadrature_nodes: quad.nodes.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_grid, Domain};
    use crate::levy::{build_quadrature, Atom};

    fn grid_1d(h: f64) -> Arc<Grid> {
        Arc::new(build_grid(&Domain::new_box(vec![-1.0], vec![1.0]).unwrap(), h).unwrap())
    }

    fn atom_setup() -> (LevyModel, QuadratureRule) {
        let levy = LevyModel::compound_poisson(vec![Atom { z: vec![0.5], mass: 2.0 }]).unwrap();
        let quad = build_quadrature(&levy, 0.1, 1.0, 8).unwrap();
        (levy, quad)
    }

    #[test]
    fn l_on_quadratic_and_constants() {
        let g = grid_1d(0.125);
        let c = Coefficients::constant(1.0, 0.0, 0.0, 0.0, 0.0);
        let u = SolutionField::from_fn(g.clone(), |x| x[0] * x[0]);
        // Central differences are exact on quadratics away from the pinned boundary values.
        let lu = apply_l(&c, &u);
        for &n in g.interior_nodes() {
            let x = g.coords(n)[0];
            if x.abs() < 0.8 {
                assert!((lu.value(n) + 2.0).abs() < 1e-12);
            }
        }
        let c2 = Coefficients::constant(0.7, 0.3, 1.5, 0.0, 0.0);
        let k = SolutionField::from_fn(g.clone(), |_| 2.0);
        let lk = apply_l(&c2, &k);
        for &n in g.interior_nodes() {
            let x = g.coords(n)[0];
            if x.abs() < 0.8 {
                assert!((lk.value(n) - 3.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn upwind_exact_on_linear() {
        let g = grid_1d(0.25);
        let c = Coefficients::constant(1.0, 3.0, 0.0, 0.0, 0.0);
        let u = SolutionField::from_fn(g.clone(), |x| x[0]);
        let lu = apply_l(&c, &u);
        for &n in g.interior_nodes() {
            let x = g.coords(n)[0];
            if x.abs() < 0.6 {
                assert!((lu.value(n) - 3.0).abs() < 1e-12, "x = {x}");
            }
        }
    }

    #[test]
    fn single_atom_nonlocal() {
        let g = grid_1d(0.25);
        let (levy, quad) = atom_setup();
        let s = JumpDensity::default();
        let u = SolutionField::from_fn(g.clone(), |x| x[0]);
        let iu = apply_i(&levy, &s, &quad, &u);
        let at = |x: f64| g.interior_nodes().iter().copied().find(|&n| (g.coords(n)[0] - x).abs() < 1e-12).unwrap();
        assert!((iu.value(at(0.0)) - 1.0).abs() < 1e-14);
        assert!((iu.value(at(0.75)) + 1.5).abs() < 1e-14);
    }

    #[test]
    fn gamma_hand_value() {
        let g = grid_1d(0.25);
        let (levy, quad) = atom_setup();
        let s = JumpDensity::default();
        let c = Coefficients::constant(1.0, 0.0, 1.0, 0.0, 0.0);
        let u = SolutionField::from_fn(g.clone(), |x| x[0] * x[0]);
        let gu = apply_gamma(&c, &levy, &s, &quad, &u);
        let zero = g.node_at([4, 0]);
        assert!((gu.value(zero) + 2.5).abs() < 1e-12);
    }

    #[test]
    fn tridiagonal_rows() {
        let g = grid_1d(0.5);
        let c = Coefficients::constant(1.0, 0.0, 1.0, 0.0, 0.0);
        let quad = QuadratureRule::empty();
        let m = assemble_linear_system(&c, &LevyModel::default(), &JumpDensity::default(), &quad, g).unwrap();
        let row: Vec<(usize, f64)> = m.to_csr().row(1).collect();
        assert_eq!(row, vec![(0, -4.0), (1, 9.0), (2, -4.0)]);
    }

    #[test]
    fn atom_enters_matrix() {
        let g = grid_1d(0.5);
        let c = Coefficients::constant(1.0, 0.0, 1.0, 0.0, 0.0);
        let (levy, quad) = atom_setup();
        let m = assemble_linear_system(&c, &levy, &JumpDensity::default(), &quad, g).unwrap();
        // node x = 0 is unknown 1; x + 0.5 is unknown 2
        let row: Vec<(usize, f64)> = m.to_csr().row(1).collect();
        assert_eq!(row, vec![(0, -4.0), (1, 11.0), (2, -6.0)]);
    }

    #[test]
    fn cross_term_violation_detected() {
        let d = Domain::new_box(vec![-1.0, -1.0], vec![1.0, 1.0]).unwrap();
        let g = Arc::new(build_grid(&d, 0.25).unwrap());
        let mut c = Coefficients::constant(1.0, 0.0, 1.0, 0.0, 0.0);
        c.b = VectorField::Vector(vec![Expr::Const(0.0), Expr::Const(0.0)]);
        c.a = TensorField::Matrix(vec![
            vec![Expr::Const(1.0), Expr::Const(1.5)],
            vec![Expr::Const(1.5), Expr::Const(3.0)],
        ]);
        let r = assemble_linear_system(&c, &LevyModel::default(), &JumpDensity::default(), &QuadratureRule::empty(), g);
        assert!(matches!(r, Err(OperatorError::EllipticityViolation { .. })));
    }

    #[test]
    fn matrix_matches_pointwise_2d() {
        let d = Domain::new_ball(vec![0.0, 0.0], 1.0).unwrap();
        let g = Arc::new(build_grid(&d, 0.125).unwrap());
        let mut c = Coefficients::constant(1.0, 0.0, 0.5, 0.0, 0.0);
        c.a = TensorField::Matrix(vec![
            vec![Expr::Const(1.0), Expr::Const(-0.3)],
            vec![Expr::Const(-0.3), Expr::Const(0.8)],
        ]);
        c.b = VectorField::Vector(vec![Expr::Var(crate::expr::Var::Y), Expr::Const(-0.4)]);
        let levy = LevyModel::compound_poisson(vec![
            Atom { z: vec![0.3, 0.1], mass: 1.0 },
            Atom { z: vec![-0.05, 0.02], mass: 3.0 },
        ])
        .unwrap();
        let quad = build_quadrature(&levy, 0.01, 1.0, 8).unwrap();
        let s = JumpDensity::default();
        let m = assemble_linear_system(&c, &levy, &s, &quad, g.clone()).unwrap();
        let u = SolutionField::from_fn(g, |x| (2.0 * x[0]).sin() * x[1].cos() + 0.3);
        let direct = apply_gamma(&c, &levy, &s, &quad, &u);
        let via = m.apply_field(&u).unwrap();
        let scale = 1.0 + direct.sup_norm();
        let diff = direct.values().iter().zip(via.values()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(diff < 1e-12 * scale, "{diff}");
    }
}
