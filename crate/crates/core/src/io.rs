//! CSV exchange format for nodal fields.
//!
//! Lines starting with `#` are comments. The header is
//! `node_index,x[,y],u,grad_norm,residual` and there is one row per interior
//! node, values printed with 17 significant digits.

use std::sync::Arc;

use thiserror::Error;

use crate::geometry::{Grid, SolutionField};

#[derive(Debug, Error, PartialEq)]
pub enum CsvError {
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("missing rows for {0} interior nodes")]
    MissingRows(usize),
    #[error("{name} has {got} entries, expected {expected}")]
    WrongLength { name: &'static str, expected: usize, got: usize },
}

fn header(dim: usize) -> &'static str {
    if dim == 1 {
        "node_index,x,u,grad_norm,residual"
    } else {
        "node_index,x,y,u,grad_norm,residual"
    }
}

/// Render interior rows; `grad_norm` and `residual` are per unknown.
pub fn write_field_csv(
    field: &SolutionField,
    grad_norm: &[f64],
    residual: &[f64],
    comments: &[String],
) -> Result<String, CsvError> {
    let grid = field.grid();
    let n = grid.n_interior();
    for (name, v) in [("grad_norm", grad_norm), ("residual", residual)] {
        if v.len() != n {
            return Err(CsvError::WrongLength { name, expected: n, got: v.len() });
        }
    }
    let mut out = String::new();
    for c in comments {
        out.push_str("# ");
        out.push_str(c);
        out.push('\n');
    }
    out.push_str(header(grid.dim()));
    out.push('\n');
    for (k, &node) in grid.interior_nodes().iter().enumerate() {
        out.push_str(&node.to_string());
        for x in grid.coords(node) {
            out.push_str(&format!(",{x:.16e}"));
        }
        out.push_str(&format!(",{:.16e},{:.16e},{:.16e}\n", field.value(node), grad_norm[k], residual[k]));
    }
    Ok(out)
}

/// Parse a field written by [`write_field_csv`] back onto `grid`.
///
/// Every interior node must appear exactly once with matching coordinates.
pub fn read_field_csv(text: &str, grid: Arc<Grid>) -> Result<SolutionField, CsvError> {
    let dim = grid.dim();
    let mut values = vec![f64::NAN; grid.n_nodes()];
    let mut seen = vec![false; grid.n_nodes()];
    let mut saw_header = false;
    let tol = 1e-9 * (1.0 + grid.spacing());
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let bad = |message: String| CsvError::Malformed { line, message };
        let row = raw.trim();
        if row.is_empty() || row.starts_with('#') {
            continue;
        }
        if !saw_header {
            if row != header(dim) {
                return Err(bad(format!("expected header `{}`", header(dim))));
            }
            saw_header = true;
            continue;
        }
        let cols: Vec<&str> = row.split(',').collect();
        if cols.len() != dim + 4 {
            return Err(bad(format!("expected {} columns, found {}", dim + 4, cols.len())));
        }
        let node: usize = cols[0].trim().parse().map_err(|_| bad(format!("bad node index `{}`", cols[0])))?;
        if node >= grid.n_nodes() || !grid.is_interior(node) {
            return Err(bad(format!("node {node} is not an interior node of the grid")));
        }
        if seen[node] {
            return Err(bad(format!("node {node} appears twice")));
        }
        let mut nums = Vec::with_capacity(dim + 3);
        for c in &cols[1..] {
            let v: f64 = c.trim().parse().map_err(|_| bad(format!("bad number `{c}`")))?;
            if !v.is_finite() {
                return Err(bad(format!("non-finite value `{c}`")));
            }
            nums.push(v);
        }
        let x = grid.coords(node);
        if x.iter().zip(&nums).any(|(a, b)| (a - b).abs() > tol * (1.0 + a.abs())) {
            return Err(bad(format!("coordinates do not match node {node}")));
        }
        seen[node] = true;
        values[node] = nums[dim];
    }
    if !saw_header {
        return Err(CsvError::Malformed { line: text.lines().count(), message: "missing header".into() });
    }
    let missing = grid.interior_nodes().iter().filter(|&&n| !seen[n]).count();
    if missing > 0 {
        return Err(CsvError::MissingRows(missing));
    }
    let interior: Vec<f64> = grid.interior_nodes().iter().map(|&n| values[n]).collect();
    Ok(SolutionField::from_interior(grid, &interior))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_grid, Domain};

    #[test]
    fn round_trip_is_lossless() {
        let grid = Arc::new(build_grid(&Domain::new_ball(vec![0.0, 0.0], 1.0).unwrap(), 0.25).unwrap());
        let f = SolutionField::from_fn(grid.clone(), |x| (x[0] * 3.1).sin() + x[1] / 7.0);
        let n = grid.n_interior();
        let text = write_field_csv(&f, &vec![0.5; n], &vec![-1e-300; n], &["seed=1".into()]).unwrap();
        let back = read_field_csv(&text, grid).unwrap();
        for (a, b) in f.values().iter().zip(back.values()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn rejects_foreign_rows() {
        let grid = Arc::new(build_grid(&Domain::new_box(vec![0.0], vec![1.0]).unwrap(), 0.25).unwrap());
        let f = SolutionField::zeros(grid.clone());
        let text = write_field_csv(&f, &[0.0; 3], &[0.0; 3], &[]).unwrap();
        let dropped: String = text.lines().take(3).map(|l| format!("{l}\n")).collect();
        assert_eq!(read_field_csv(&dropped, grid.clone()), Err(CsvError::MissingRows(1)));
        let shifted = text.replace("2.5000000000000000e-1", "2.6000000000000000e-1");
        assert!(matches!(read_field_csv(&shifted, grid), Err(CsvError::Malformed { .. })));
    }
}
