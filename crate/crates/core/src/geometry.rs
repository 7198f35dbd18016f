//! Computational domains, Cartesian lattices and the zero-extension convention.
//!
//! A [`Grid`] is a uniform lattice over a bounding box of the domain. Nodes
//! strictly inside the (open) domain are unknowns; every other node carries
//! the value zero, which is how the exterior condition `u = 0` outside the
//! domain is imposed for both the local stencil and the nonlocal quadrature.

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum GeometryError {
    #[error("dimension must be 1 or 2, got {0}")]
    UnsupportedDimension(usize),
    #[error("invalid domain: {0}")]
    InvalidDomain(String),
    #[error("spacing {h} leaves only {count} interior nodes on axis {axis} (need at least 3)")]
    SpacingTooCoarse { h: f64, axis: usize, count: usize },
    #[error("grid spacing must be positive and finite, got {0}")]
    InvalidSpacing(f64),
    #[error("lattice too large: {0} nodes")]
    TooManyNodes(usize),
}

/// Upper bound on lattice size; keeps hostile configs from exhausting memory.
pub const MAX_LATTICE_NODES: usize = 4_000_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum Domain {
    Box { lo: Vec<f64>, hi: Vec<f64> },
    Ball { center: Vec<f64>, radius: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PointClass {
    Inside,
    Outside,
}

impl Domain {
    pub fn new_box(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self, GeometryError> {
        let d = Domain::Box { lo, hi };
        d.validate()?;
        Ok(d)
    }

    pub fn new_ball(center: Vec<f64>, radius: f64) -> Result<Self, GeometryError> {
        let d = Domain::Ball { center, radius };
        d.validate()?;
        Ok(d)
    }

    pub fn dim(&self) -> usize {
        match self {
            Domain::Box { lo, .. } => lo.len(),
            Domain::Ball { center, .. } => center.len(),
        }
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        let dim = self.dim();
        if !(1..=2).contains(&dim) {
            return Err(GeometryError::UnsupportedDimension(dim));
        }
        match self {
            Domain::Box { lo, hi } => {
                if hi.len() != lo.len() {
                    return Err(GeometryError::InvalidDomain(format!(
                        "lo has {} entries but hi has {}",
                        lo.len(),
                        hi.len()
                    )));
                }
                for (i, (l, u)) in lo.iter().zip(hi).enumerate() {
                    if !l.is_finite() || !u.is_finite() || l >= u {
                        return Err(GeometryError::InvalidDomain(format!(
                            "box axis {i}: need finite lo < hi, got [{l}, {u}]"
                        )));
                    }
                }
            }
            Domain::Ball { center, radius } => {
                if center.iter().any(|c| !c.is_finite()) {
                    return Err(GeometryError::InvalidDomain("ball center must be finite".into()));
                }
                if !(radius.is_finite() && *radius > 0.0) {
                    return Err(GeometryError::InvalidDomain(format!(
                        "ball radius must be positive, got {radius}"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Bounding box `(lo, hi)` of the closed domain.
    pub fn bounding_box(&self) -> (Vec<f64>, Vec<f64>) {
        match self {
            Domain::Box { lo, hi } => (lo.clone(), hi.clone()),
            Domain::Ball { center, radius } => (
                center.iter().map(|c| c - radius).collect(),
                center.iter().map(|c| c + radius).collect(),
            ),
        }
    }

    /// Membership in the open set. Boundary points are `Outside`.
    pub fn classify_point(&self, x: &[f64]) -> PointClass {
        if self.contains(x) {
            PointClass::Inside
        } else {
            PointClass::Outside
        }
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        self.contains_with_margin(x, 0.0)
    }

    fn contains_with_margin(&self, x: &[f64], margin: f64) -> bool {
        match self {
            Domain::Box { lo, hi } => x
                .iter()
                .zip(lo.iter().zip(hi))
                .all(|(xi, (l, u))| *xi > l + margin && *xi < u - margin),
            Domain::Ball { center, radius } => {
                let r2: f64 = x.iter().zip(center).map(|(a, b)| (a - b) * (a - b)).sum();
                r2.sqrt() < radius - margin
            }
        }
    }

    /// Signed distance to the boundary: negative inside, positive outside.
    pub fn signed_distance(&self, x: &[f64]) -> f64 {
        match self {
            Domain::Box { lo, hi } => {
                let mut outside = 0.0f64;
                let mut inside = f64::INFINITY;
                for (xi, (l, u)) in x.iter().zip(lo.iter().zip(hi)) {
                    let below = l - xi;
                    let above = xi - u;
                    let e = below.max(above);
                    if e > 0.0 {
                        outside += e * e;
                    }
                    inside = inside.min(-e);
                }
                if outside > 0.0 {
                    outside.sqrt()
                } else {
                    -inside
                }
            }
            Domain::Ball { center, radius } => {
                let r2: f64 = x.iter().zip(center).map(|(a, b)| (a - b) * (a - b)).sum();
                r2.sqrt() - radius
            }
        }
    }

    /// Boundary pieces near `x` as (distance, outward unit normal).
    ///
    /// For a box every face is returned; for a ball the single nearest point.
    pub fn boundary_faces(&self, x: &[f64]) -> Vec<(f64, Vec<f64>)> {
        match self {
            Domain::Box { lo, hi } => {
                let d = lo.len();
                let mut faces = Vec::with_capacity(2 * d);
                for i in 0..d {
                    let mut n = vec![0.0; d];
                    n[i] = -1.0;
                    faces.push((x[i] - lo[i], n.clone()));
                    n[i] = 1.0;
                    faces.push((hi[i] - x[i], n));
                }
                faces
            }
            Domain::Ball { center, radius } => {
                let diff: Vec<f64> = x.iter().zip(center).map(|(a, b)| a - b).collect();
                let r = diff.iter().map(|v| v * v).sum::<f64>().sqrt();
                let n = if r > 0.0 {
                    diff.iter().map(|v| v / r).collect()
                } else {
                    let mut e = vec![0.0; diff.len()];
                    e[0] = 1.0;
                    e
                };
                vec![(radius - r, n)]
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeClass {
    Interior,
    Boundary,
    Exterior,
}

/// Uniform lattice over the bounding box of a domain.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    domain: Domain,
    h: f64,
    origin: Vec<f64>,
    shape: Vec<usize>,
    classes: Vec<NodeClass>,
    interior: Vec<usize>,
    unknown_of: Vec<usize>,
}

pub const NOT_UNKNOWN: usize = usize::MAX;

impl Grid {
    pub fn dim(&self) -> usize {
        self.shape.len()
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    pub fn spacing(&self) -> f64 {
        self.h
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn origin(&self) -> &[f64] {
        &self.origin
    }

    pub fn n_nodes(&self) -> usize {
        self.classes.len()
    }

    pub fn n_interior(&self) -> usize {
        self.interior.len()
    }

    pub fn class(&self, node: usize) -> NodeClass {
        self.classes[node]
    }

    pub fn classes(&self) -> &[NodeClass] {
        &self.classes
    }

    /// Lattice indices of interior nodes, in lexicographic order.
    pub fn interior_nodes(&self) -> &[usize] {
        &self.interior
    }

    /// Unknown number of a lattice node, or [`NOT_UNKNOWN`].
    pub fn unknown_index(&self, node: usize) -> usize {
        self.unknown_of[node]
    }

    pub fn is_interior(&self, node: usize) -> bool {
        self.classes[node] == NodeClass::Interior
    }

    pub fn multi_index(&self, node: usize) -> [usize; 2] {
        if self.dim() == 1 {
            [node, 0]
        } else {
            [node % self.shape[0], node / self.shape[0]]
        }
    }

    pub fn node_at(&self, idx: [usize; 2]) -> usize {
        if self.dim() == 1 {
            idx[0]
        } else {
            idx[0] + self.shape[0] * idx[1]
        }
    }

    pub fn coords(&self, node: usize) -> Vec<f64> {
        let mi = self.multi_index(node);
        (0..self.dim()).map(|a| self.origin[a] + mi[a] as f64 * self.h).collect()
    }

    /// Neighbour along `axis` at lattice offset `step` (±1), if it exists.
    pub fn neighbor(&self, node: usize, axis: usize, step: isize) -> Option<usize> {
        let mut mi = self.multi_index(node);
        let j = mi[axis] as isize + step;
        if j < 0 || j >= self.shape[axis] as isize {
            return None;
        }
        mi[axis] = j as usize;
        Some(self.node_at(mi))
    }

    /// Multilinear interpolation stencil at `x`: lattice corners and weights.
    ///
    /// Returns `None` when `x` is outside the domain (zero extension).
    /// Corners that are not interior are still listed; their field value is 0.
    pub fn interpolation_stencil(&self, x: &[f64]) -> Option<Vec<(usize, f64)>> {
        if !self.domain.contains(x) {
            return None;
        }
        let d = self.dim();
        let mut base = [0usize; 2];
        let mut frac = [0.0f64; 2];
        for a in 0..d {
            let s = (x[a] - self.origin[a]) / self.h;
            let max_cell = self.shape[a] - 2;
            let i = (s.floor().max(0.0) as usize).min(max_cell);
            base[a] = i;
            frac[a] = (s - i as f64).clamp(0.0, 1.0);
        }
        let mut out = Vec::with_capacity(1 << d);
        if d == 1 {
            out.push((base[0], 1.0 - frac[0]));
            out.push((base[0] + 1, frac[0]));
        } else {
            for (dj, wy) in [(0usize, 1.0 - frac[1]), (1, frac[1])] {
                for (di, wx) in [(0usize, 1.0 - frac[0]), (1, frac[0])] {
                    let node = self.node_at([base[0] + di, base[1] + dj]);
                    out.push((node, wx * wy));
                }
            }
        }
        Some(out)
    }
}

/// Build the lattice for `domain` at spacing `h` and classify every node.
pub fn build_grid(domain: &Domain, h: f64) -> Result<Grid, GeometryError> {
    domain.validate()?;
    if !(h.is_finite() && h > 0.0) {
        return Err(GeometryError::InvalidSpacing(h));
    }
    let dim = domain.dim();
    let (lo, hi) = domain.bounding_box();
    let mut shape = Vec::with_capacity(dim);
    let mut total: usize = 1;
    for a in 0..dim {
        let cells = ((hi[a] - lo[a]) / h - 1e-9).ceil().max(1.0);
        if !cells.is_finite() || cells > MAX_LATTICE_NODES as f64 {
            return Err(GeometryError::TooManyNodes(usize::MAX));
        }
        let n = cells as usize + 1;
        total = total.saturating_mul(n);
        shape.push(n);
    }
    if total > MAX_LATTICE_NODES {
        return Err(GeometryError::TooManyNodes(total));
    }

    let mut grid = Grid {
        domain: domain.clone(),
        h,
        origin: lo,
        shape,
        classes: Vec::with_capacity(total),
        interior: Vec::new(),
        unknown_of: vec![NOT_UNKNOWN; total],
    };
    // Lattice nodes that sit on the boundary up to rounding must not become unknowns.
    let margin = 1e-9 * h;
    for node in 0..total {
        let x = grid.coords(node);
        let class = if domain.contains_with_margin(&x, margin) {
            NodeClass::Interior
        } else if domain.signed_distance(&x) <= h * (1.0 + 1e-9) {
            NodeClass::Boundary
        } else {
            NodeClass::Exterior
        };
        if class == NodeClass::Interior {
            grid.unknown_of[node] = grid.interior.len();
            grid.interior.push(node);
        }
        grid.classes.push(class);
    }

    for axis in 0..dim {
        let mut per_line = vec![0usize; grid.n_nodes()];
        let mut best = 0usize;
        for &node in &grid.interior {
            let mut mi = grid.multi_index(node);
            mi[axis] = 0;
            let key = grid.node_at(mi);
            per_line[key] += 1;
            best = best.max(per_line[key]);
        }
        if best < 3 {
            return Err(GeometryError::SpacingTooCoarse { h, axis, count: best });
        }
    }
    Ok(grid)
}

/// A grid-sampled scalar field; non-interior nodes hold exactly zero.
#[derive(Debug, Clone)]
pub struct SolutionField {
    grid: Arc<Grid>,
    values: Vec<f64>,
}

impl PartialEq for SolutionField {
    fn eq(&self, other: &Self) -> bool {
        self.same_grid(other) && self.values == other.values
    }
}

impl SolutionField {
    pub fn zeros(grid: Arc<Grid>) -> Self {
        let n = grid.n_nodes();
        SolutionField { grid, values: vec![0.0; n] }
    }

    /// Sample `f` at interior nodes; every other node is set to 0.
    pub fn from_fn(grid: Arc<Grid>, f: impl Fn(&[f64]) -> f64) -> Self {
        let mut field = SolutionField::zeros(grid);
        for k in 0..field.grid.n_interior() {
            let node = field.grid.interior_nodes()[k];
            let x = field.grid.coords(node);
            field.values[node] = f(&x);
        }
        field
    }

    /// Build from unknown-ordered interior values.
    pub fn from_interior(grid: Arc<Grid>, interior: &[f64]) -> Self {
        assert_eq!(interior.len(), grid.n_interior(), "interior vector length mismatch");
        let mut field = SolutionField::zeros(grid);
        for (k, &v) in interior.iter().enumerate() {
            let node = field.grid.interior_nodes()[k];
            field.values[node] = v;
        }
        field
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn value(&self, node: usize) -> f64 {
        self.values[node]
    }

    /// Set the value at an interior node. Writes to other nodes are ignored.
    pub fn set(&mut self, node: usize, v: f64) {
        if self.grid.is_interior(node) {
            self.values[node] = v;
        }
    }

    pub fn interior_values(&self) -> Vec<f64> {
        self.grid.interior_nodes().iter().map(|&n| self.values[n]).collect()
    }

    pub fn same_grid(&self, other: &SolutionField) -> bool {
        Arc::ptr_eq(&self.grid, &other.grid) || *self.grid == *other.grid
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    pub fn min_value(&self) -> f64 {
        self.grid.interior_nodes().iter().map(|&n| self.values[n]).fold(f64::INFINITY, f64::min)
    }

    pub fn max_value(&self) -> f64 {
        self.grid
            .interior_nodes()
            .iter()
            .map(|&n| self.values[n])
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Zero-extended evaluation: exactly 0 outside the open domain, multilinear
    /// interpolation of the lattice values inside.
    pub fn value_extended(&self, x: &[f64]) -> f64 {
        match self.grid.interpolation_stencil(x) {
            None => 0.0,
            Some(stencil) => stencil.iter().map(|&(n, w)| w * self.values[n]).sum(),
        }
    }

    pub fn map_interior(&self, f: impl Fn(usize, f64) -> f64) -> SolutionField {
        let mut out = self.clone();
        for &node in self.grid.interior_nodes() {
            out.values[node] = f(node, self.values[node]);
        }
        out
    }
}

/// Free-function form of [`SolutionField::value_extended`].
pub fn field_value_extended(field: &SolutionField, x: &[f64]) -> f64 {
    field.value_extended(x)
}

pub fn classify_point(domain: &Domain, x: &[f64]) -> PointClass {
    domain.classify_point(x)
}

/// One shifted evaluation point `x + z` used by the nonlocal quadrature.
#[derive(Debug, Clone)]
pub struct ShiftedPoint {
    pub point: Vec<f64>,
    pub outside: bool,
    /// Interior corners with interpolation weights; empty when `outside`.
    pub stencil: Vec<(usize, f64)>,
}

/// Per-interior-node table of the points `x + z_k` reached by a set of jump sizes.
#[derive(Debug, Clone)]
pub struct ExtendedSupport {
    pub grid: Arc<Grid>,
    /// `reach[k][j]` is the shift of interior unknown `k` by jump `j`.
    pub reach: Vec<Vec<ShiftedPoint>>,
}

impl ExtendedSupport {
    pub fn build(grid: Arc<Grid>, jumps: &[Vec<f64>]) -> Self {
        let reach = grid
            .interior_nodes()
            .iter()
            .map(|&node| {
                let x = grid.coords(node);
                jumps
                    .iter()
                    .map(|z| {
                        let point: Vec<f64> = x.iter().zip(z).map(|(a, b)| a + b).collect();
                        match grid.interpolation_stencil(&point) {
                            None => ShiftedPoint { point, outside: true, stencil: Vec::new() },
                            Some(st) => {
                                let stencil = st
                                    .into_iter()
                                    .filter(|&(n, w)| grid.is_interior(n) && w != 0.0)
                                    .collect();
                                ShiftedPoint { point, outside: false, stencil }
                            }
                        }
                    })
                    .collect()
            })
            .collect();
        ExtendedSupport { grid, reach }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn approx(a: f64, b: f64) -> bool {
        (a - b).abs() < 1e-12
    }

    #[test]
    fn box_lattice_and_interior() {
        let d = Domain::new_box(vec![-1.0], vec![1.0]).unwrap();
        let g = build_grid(&d, 0.5).unwrap();
        let xs: Vec<f64> = (0..g.n_nodes()).map(|n| g.coords(n)[0]).collect();
        assert_eq!(xs, vec![-1.0, -0.5, 0.0, 0.5, 1.0]);
        let interior: Vec<f64> = g.interior_nodes().iter().map(|&n| g.coords(n)[0]).collect();
        assert_eq!(interior, vec![-0.5, 0.0, 0.5]);
        assert_eq!(g.class(0), NodeClass::Boundary);
        assert_eq!(g.class(4), NodeClass::Boundary);
    }

    #[test]
    fn ball_lattice_membership() {
        let d = Domain::new_ball(vec![0.0, 0.0], 1.0).unwrap();
        let g = build_grid(&d, 0.5).unwrap();
        let target = g
            .interior_nodes()
            .iter()
            .any(|&n| {
                let x = g.coords(n);
                approx(x[0], 0.5) && approx(x[1], 0.5)
            });
        assert!(target);
        for &n in g.interior_nodes() {
            let x = g.coords(n);
            assert!(x[0] * x[0] + x[1] * x[1] < 1.0);
        }
        // (1, 1) is at distance sqrt(2) - 1 < h from the circle
        let corner = g.node_at([4, 4]);
        assert_eq!(g.class(corner), NodeClass::Boundary);
    }

    #[test]
    fn too_coarse_spacing() {
        let d = Domain::new_box(vec![0.0], vec![1.0]).unwrap();
        assert!(matches!(build_grid(&d, 0.6), Err(GeometryError::SpacingTooCoarse { .. })));
    }

    #[test]
    fn invalid_domains_rejected() {
        assert!(Domain::new_box(vec![1.0], vec![0.0]).is_err());
        assert!(Domain::new_ball(vec![0.0, 0.0], 0.0).is_err());
        assert!(Domain::new_box(vec![0.0; 3], vec![1.0; 3]).is_err());
        let d = Domain::new_box(vec![0.0], vec![1.0]).unwrap();
        assert!(build_grid(&d, -0.1).is_err());
        assert!(build_grid(&d, f64::NAN).is_err());
    }

    #[test]
    fn classify_examples() {
        let b = Domain::new_box(vec![-1.0], vec![1.0]).unwrap();
        assert_eq!(b.classify_point(&[0.0]), PointClass::Inside);
        assert_eq!(b.classify_point(&[1.0]), PointClass::Outside);
        let ball = Domain::new_ball(vec![0.0, 0.0], 1.0).unwrap();
        assert_eq!(ball.classify_point(&[1.0, 1.0]), PointClass::Outside);
    }

    #[test]
    fn extension_and_interpolation_1d() {
        let d = Domain::new_box(vec![-1.0], vec![1.0]).unwrap();
        let g = Arc::new(build_grid(&d, 0.5).unwrap());
        let ones = SolutionField::from_fn(g.clone(), |_| 1.0);
        assert_eq!(ones.value_extended(&[0.25]), 1.0);
        assert_eq!(ones.value_extended(&[1.5]), 0.0);
        assert_eq!(ones.value_extended(&[-1.0]), 0.0);
        let lin = SolutionField::from_fn(g, |x| x[0]);
        assert!(approx(lin.value_extended(&[0.25]), 0.25));
    }

    #[test]
    fn partition_property() {
        let d = Domain::new_ball(vec![0.2, -0.1], 0.9).unwrap();
        let g = build_grid(&d, 0.1).unwrap();
        let n_int = g.classes().iter().filter(|c| **c == NodeClass::Interior).count();
        assert_eq!(n_int, g.n_interior());
        for (k, &n) in g.interior_nodes().iter().enumerate() {
            assert_eq!(g.unknown_index(n), k);
        }
    }

    #[test]
    fn affine_reproduction_2d() {
        let d = Domain::new_box(vec![-1.0, -1.0], vec![1.0, 1.0]).unwrap();
        let g = Arc::new(build_grid(&d, 0.25).unwrap());
        let f = SolutionField::from_fn(g, |x| 0.3 + 2.0 * x[0] - 0.7 * x[1]);
        for p in [[0.1f64, 0.2], [-0.33, 0.61], [0.49, -0.74]] {
            // Points whose interpolation cell touches the boundary see the pinned zeros.
            let inner = p.iter().all(|v| v.abs() < 0.75);
            if inner {
                let expect = 0.3 + 2.0 * p[0] - 0.7 * p[1];
                assert!((f.value_extended(&p) - expect).abs() < 1e-12);
            }
        }
    }
}
