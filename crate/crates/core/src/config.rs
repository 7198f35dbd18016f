//! JSON problem configuration: parsing, validation and construction of the
//! discrete problem and SDE parameters.

use std::path::Path as FsPath;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::control::SdeParams;
use crate::expr::Expr;
use crate::geometry::{build_grid, Domain, Grid};
use crate::hjb::DEFAULT_EPS_SCHEDULE;
use crate::levy::{build_quadrature, JumpDensity, LevyError, LevyModel, QuadratureRule};
use crate::nidd::SolverOptions;
use crate::operator::{Coefficients, TensorField, VectorField};
use crate::problem::Problem;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error at line {line}, column {column} ({field}): {message}")]
    Parse { line: usize, column: usize, field: String, message: String },
    #[error("{field}: {message}")]
    Validation { field: String, message: String },
}

impl ConfigError {
    fn invalid(field: impl Into<String>, message: impl Into<String>) -> Self {
        ConfigError::Validation { field: field.into(), message: message.into() }
    }
}

fn default_delta() -> f64 {
    0.01
}

fn default_zmax() -> f64 {
    10.0
}

fn default_npd() -> usize {
    8
}

/// Cutoffs of the deterministic quadrature for the nonlocal term.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuadratureSpec {
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default = "default_zmax")]
    pub zmax: f64,
    #[serde(default = "default_npd")]
    pub n_per_decade: usize,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        QuadratureSpec { delta: default_delta(), zmax: default_zmax(), n_per_decade: default_npd() }
    }
}

fn default_dt() -> f64 {
    1e-3
}

fn default_t_max() -> f64 {
    12.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SdeSpec {
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default = "default_t_max")]
    pub t_max: f64,
    /// Jumps below this size are dropped; defaults to the quadrature cutoff.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub jump_truncation: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c12: Option<f64>,
}

impl Default for SdeSpec {
    fn default() -> Self {
        SdeSpec { dt: default_dt(), t_max: default_t_max(), jump_truncation: None, c12: None }
    }
}

fn default_schedule() -> Vec<f64> {
    DEFAULT_EPS_SCHEDULE.to_vec()
}

/// A complete problem description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSpec {
    pub domain: Domain,
    /// Lattice spacing.
    pub spacing: f64,
    pub coefficients: Coefficients,
    #[serde(default)]
    pub levy: LevyModel,
    #[serde(default)]
    pub jump_density: JumpDensity,
    #[serde(default)]
    pub quadrature: QuadratureSpec,
    #[serde(default = "default_schedule")]
    pub eps_schedule: Vec<f64>,
    #[serde(default)]
    pub solver: SolverOptions,
    #[serde(default)]
    pub sde: SdeSpec,
}

/// Read, parse and validate a config file.
pub fn load_config(path: impl AsRef<FsPath>) -> Result<ProblemSpec, ConfigError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)
        .map_err(|source| ConfigError::Io { path: path.display().to_string(), source })?;
    parse_config(&text)
}

/// Parse and validate a config from JSON text.
pub fn parse_config(text: &str) -> Result<ProblemSpec, ConfigError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let spec: ProblemSpec = serde_path_to_error::deserialize(de).map_err(|e| {
        let field = e.path().to_string();
        let inner = e.into_inner();
        ConfigError::Parse { line: inner.line(), column: inner.column(), field, message: inner.to_string() }
    })?;
    spec.validate()?;
    Ok(spec)
}

fn pretty(x: &[f64]) -> String {
    let parts: Vec<String> = x.iter().map(|v| format!("{v}")).collect();
    format!("({})", parts.join(", "))
}

fn finite_positive(field: &str, v: f64) -> Result<(), ConfigError> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(ConfigError::invalid(field, format!("must be a finite positive number, got {v}")))
    }
}

fn tensor_exprs(a: &TensorField) -> Vec<&Expr> {
    match a {
        TensorField::Scalar(e) => vec![e],
        TensorField::Matrix(m) => m.iter().flatten().collect(),
    }
}

fn vector_exprs(b: &VectorField) -> Vec<&Expr> {
    match b {
        VectorField::Scalar(e) => vec![e],
        VectorField::Vector(v) => v.iter().collect(),
    }
}

fn levy_error(e: LevyError) -> ConfigError {
    match e {
        LevyError::DivergentMeasure(alpha) => ConfigError::invalid(
            "levy.alpha",
            format!("must satisfy 0 <= alpha < 1 so that the measure has bounded variation, got {alpha}"),
        ),
        LevyError::InvalidCutoffs { delta, r } => {
            ConfigError::invalid("levy", format!("need 0 < delta < zmax, got delta = {delta}, zmax = {r}"))
        }
        LevyError::DensityOutOfRange { value, x, z } => ConfigError::invalid(
            "jump_density",
            format!("must lie in [0, 1], got {value} at x = {}, z = {}", pretty(&x), pretty(&z)),
        ),
        LevyError::InvalidModel(m) => ConfigError::invalid("levy", m),
    }
}

impl ProblemSpec {
    pub fn dim(&self) -> usize {
        self.domain.dim()
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("spec serializes")
    }

    pub fn build_grid(&self) -> Result<Grid, ConfigError> {
        build_grid(&self.domain, self.spacing).map_err(|e| ConfigError::invalid("spacing", e.to_string()))
    }

    pub fn build_quadrature(&self) -> Result<QuadratureRule, ConfigError> {
        if self.levy.is_empty() {
            return Ok(QuadratureRule::empty());
        }
        let q = &self.quadrature;
        build_quadrature(&self.levy, q.delta, q.zmax, q.n_per_decade).map_err(|e| match e {
            LevyError::InvalidCutoffs { delta, r } => {
                ConfigError::invalid("quadrature", format!("need 0 < delta < zmax, got delta = {delta}, zmax = {r}"))
            }
            LevyError::InvalidModel(m) if m.contains("n_per_decade") => {
                ConfigError::invalid("quadrature.n_per_decade", m)
            }
            other => levy_error(other),
        })
    }

    /// Check every modelling assumption the solvers rely on.
    pub fn validate(&self) -> Result<(), ConfigError> {
        self.domain.validate().map_err(|e| ConfigError::invalid("domain", e.to_string()))?;
        finite_positive("spacing", self.spacing)?;
        let dim = self.dim();
        let grid = self.build_grid()?;
        let c = &self.coefficients;
        c.check_shapes(dim).map_err(|e| ConfigError::invalid("coefficients", e.to_string()))?;
        if let VectorField::Scalar(e) = &c.b {
            if dim == 2 && e.as_const() != Some(0.0) {
                return Err(ConfigError::invalid("coefficients.b", "must be a vector in two dimensions"));
            }
        }
        let named: Vec<(&str, Vec<&Expr>)> = vec![
            ("coefficients.a", tensor_exprs(&c.a)),
            ("coefficients.b", vector_exprs(&c.b)),
            ("coefficients.c", vec![&c.c]),
            ("coefficients.h", vec![&c.h_cost]),
            ("coefficients.g", vec![&c.g_cost]),
        ];
        for (field, exprs) in &named {
            if exprs.iter().any(|e| e.uses_jump_vars()) {
                return Err(ConfigError::invalid(*field, "may depend on x and y only"));
            }
        }
        finite_positive("coefficients.theta", c.theta)?;
        for &node in grid.interior_nodes() {
            let x = grid.coords(node);
            let at = pretty(&x);
            let cv = c.c_at(&x);
            if !(cv.is_finite() && cv > 0.0) {
                return Err(ConfigError::invalid("coefficients.c", format!("must be > 0 on the domain, got {cv} at {at}")));
            }
            let hv = c.h_at(&x);
            if !(hv.is_finite() && hv >= 0.0) {
                return Err(ConfigError::invalid("coefficients.h", format!("must be >= 0 on the domain, got {hv} at {at}")));
            }
            let gv = c.g_at(&x);
            if !(gv.is_finite() && gv >= 0.0) {
                return Err(ConfigError::invalid("coefficients.g", format!("must be >= 0 on the domain, got {gv} at {at}")));
            }
            let b = c.b_at(&x);
            if b[..dim].iter().any(|v| !v.is_finite()) {
                return Err(ConfigError::invalid("coefficients.b", format!("not finite at {at}")));
            }
            let a = c.a_at(&x);
            if (0..dim).any(|i| (0..dim).any(|j| !a[i][j].is_finite())) {
                return Err(ConfigError::invalid("coefficients.a", format!("not finite at {at}")));
            }
            let min_eig = if dim == 1 {
                a[0][0]
            } else {
                if (a[0][1] - a[1][0]).abs() > 1e-12 * (1.0 + a[0][1].abs()) {
                    return Err(ConfigError::invalid("coefficients.a", format!("must be symmetric, violated at {at}")));
                }
                let tr = a[0][0] + a[1][1];
                let det = a[0][0] * a[1][1] - a[0][1] * a[1][0];
                0.5 * (tr - (tr * tr - 4.0 * det).max(0.0).sqrt())
            };
            if min_eig < c.theta {
                return Err(ConfigError::invalid(
                    "coefficients.a",
                    format!("must be uniformly elliptic with floor theta = {}, smallest eigenvalue {min_eig} at {at}", c.theta),
                ));
            }
            if dim == 2 && a[0][1].abs() > a[0][0].min(a[1][1]) {
                return Err(ConfigError::invalid(
                    "coefficients.a",
                    format!("off-diagonal entry exceeds the diagonal at {at}; the monotone stencil needs a11, a22 >= |a12|"),
                ));
            }
        }
        if !self.levy.is_empty() {
            self.levy.validate().map_err(levy_error)?;
            if self.levy.dim() != Some(dim) {
                return Err(ConfigError::invalid("levy", format!("jump sizes must have dimension {dim}")));
            }
            let reach = match &self.levy {
                LevyModel::CompoundPoisson { atoms } => {
                    atoms.iter().map(|a| a.z.iter().map(|v| v * v).sum::<f64>().sqrt()).fold(0.0, f64::max)
                }
                LevyModel::BvDensity(b) => b.z_max,
            };
            if self.quadrature.zmax < reach {
                return Err(ConfigError::invalid(
                    "quadrature.zmax",
                    format!("must cover the largest jump size {reach}, got {}", self.quadrature.zmax),
                ));
            }
        }
        let quad = self.build_quadrature()?;
        match &self.jump_density {
            JumpDensity::Constant { value } if !(0.0..=1.0).contains(value) => {
                return Err(ConfigError::invalid("jump_density.value", format!("must lie in [0, 1], got {value}")));
            }
            JumpDensity::Expr { lipschitz: Some(l), .. } if !(l.is_finite() && *l >= 0.0) => {
                return Err(ConfigError::invalid("jump_density.lipschitz", format!("must be >= 0, got {l}")));
            }
            _ => {}
        }
        if !quad.nodes.is_empty() {
            let xs: Vec<Vec<f64>> = grid.interior_nodes().iter().map(|&n| grid.coords(n)).collect();
            self.jump_density.validate_on(&xs, &quad.jump_sizes()).map_err(levy_error)?;
        }
        let s = &self.eps_schedule;
        if s.is_empty() {
            return Err(ConfigError::invalid("eps_schedule", "must not be empty"));
        }
        if let Some(e) = s.iter().find(|e| !(**e > 0.0 && **e < 1.0)) {
            return Err(ConfigError::invalid("eps_schedule", format!("entries must lie in (0, 1), got {e}")));
        }
        if s.windows(2).any(|w| w[1] >= w[0]) {
            return Err(ConfigError::invalid("eps_schedule", "must be strictly decreasing"));
        }
        let o = &self.solver;
        finite_positive("solver.tol_update", o.tol_update)?;
        finite_positive("solver.tol_res", o.tol_res)?;
        if o.max_iter == 0 {
            return Err(ConfigError::invalid("solver.max_iter", "must be at least 1"));
        }
        if !(o.damping > 0.0 && o.damping <= 1.0) {
            return Err(ConfigError::invalid("solver.damping", format!("must lie in (0, 1], got {}", o.damping)));
        }
        finite_positive("sde.dt", self.sde.dt)?;
        finite_positive("sde.t_max", self.sde.t_max)?;
        if let Some(d) = self.sde.jump_truncation {
            finite_positive("sde.jump_truncation", d)?;
        }
        if let Some(c12) = self.sde.c12 {
            finite_positive("sde.c12", c12)?;
        }
        Ok(())
    }

    pub fn build_problem(&self) -> Result<Problem, ConfigError> {
        let grid = Arc::new(self.build_grid()?);
        let quad = self.build_quadrature()?;
        Problem::new(grid, self.coefficients.clone(), self.levy.clone(), self.jump_density.clone(), quad)
            .map_err(|e| ConfigError::invalid("coefficients", e.to_string()))
    }

    /// SDE parameters; the discount is the constant `c`, and the jump
    /// density must be identically one.
    pub fn sde_params(&self) -> Result<SdeParams, ConfigError> {
        let q = self.coefficients.c.as_const().ok_or_else(|| {
            ConfigError::invalid("coefficients.c", "must be a constant to serve as the discount rate in simulations")
        })?;
        if !self.jump_density.is_identically_one() {
            return Err(ConfigError::invalid("jump_density", "simulation requires the constant density 1"));
        }
        let mut p = SdeParams::new(
            self.coefficients.clone(),
            self.levy.clone(),
            self.domain.clone(),
            q,
            self.sde.dt,
            self.sde.t_max,
            self.sde.jump_truncation.unwrap_or(self.quadrature.delta),
        );
        p.c12 = self.sde.c12;
        p.validate().map_err(|e| ConfigError::invalid("sde", e.to_string()))?;
        Ok(p)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"{
        "domain": {"type": "box", "lo": [-1], "hi": [1]},
        "spacing": 0.0625,
        "coefficients": {"a": 1, "c": 1, "h": 2, "g": 10}
    }"#;

    fn with(path: &[&str], value: serde_json::Value) -> String {
        let mut v: serde_json::Value = serde_json::from_str(BASE).unwrap();
        let mut cur = &mut v;
        for k in &path[..path.len() - 1] {
            cur = cur.get_mut(*k).unwrap();
        }
        cur[path[path.len() - 1]] = value;
        v.to_string()
    }

    #[test]
    fn minimal_config_is_valid() {
        let s = parse_config(BASE).unwrap();
        assert_eq!(s.eps_schedule, DEFAULT_EPS_SCHEDULE.to_vec());
        assert!(s.levy.is_empty());
        assert_eq!(s.sde_params().unwrap().q, 1.0);
    }

    #[test]
    fn zero_discount_is_rejected() {
        let err = parse_config(&with(&["coefficients", "c"], 0.into())).unwrap_err();
        let msg = err.to_string();
        assert!(msg.starts_with("coefficients.c:"), "{msg}");
        assert!(msg.contains("> 0"), "{msg}");
    }

    #[test]
    fn infinite_variation_is_rejected() {
        let levy = serde_json::json!({
            "type": "bv_density", "kappa": 1, "alpha": 1.5, "delta": 0.01, "zmax": 0.5, "rays": [[1], [-1]]
        });
        let msg = parse_config(&with(&["levy"], levy)).unwrap_err().to_string();
        assert!(msg.starts_with("levy.alpha:") && msg.contains("bounded variation"), "{msg}");
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = parse_config(&with(&["coefficients", "q"], 1.into())).unwrap_err();
        assert!(matches!(err, ConfigError::Parse { .. }), "{err}");
        assert!(err.to_string().contains("coefficients"), "{err}");
        assert!(matches!(parse_config(&with(&["extra"], 1.into())), Err(ConfigError::Parse { .. })));
    }

    #[test]
    fn negative_cost_is_rejected() {
        let msg = parse_config(&with(&["coefficients", "g"], serde_json::json!({"sub": ["x", 0.5]})))
            .unwrap_err()
            .to_string();
        assert!(msg.starts_with("coefficients.g:"), "{msg}");
    }

    #[test]
    fn round_trip() {
        let levy = serde_json::json!({"type": "compound_poisson", "atoms": [[0.3, 1.0], [-0.4, 0.5]]});
        let s = parse_config(&with(&["levy"], levy)).unwrap();
        let back = parse_config(&s.to_json_string()).unwrap();
        assert_eq!(s, back);
    }

    #[test]
    fn parse_errors_carry_position() {
        match parse_config("{\n  \"domain\": 3\n}") {
            Err(ConfigError::Parse { line, field, .. }) => {
                assert_eq!(line, 2);
                assert_eq!(field, "domain");
            }
            other => panic!("{other:?}"),
        }
    }
}
