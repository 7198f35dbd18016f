//! Sparse rows and a banded LU for the M-matrices produced by the scheme.

use std::fmt::Write as _;

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum LinalgError {
    #[error("singular system: zero pivot at row {row}")]
    SingularSystem { row: usize },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
}

/// Compressed sparse row matrix, square.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl CsrMatrix {
    /// Build from per-row `(col, value)` lists. Duplicate columns are summed
    /// and each row is sorted by column.
    pub fn from_rows(n: usize, rows: Vec<Vec<(usize, f64)>>) -> Self {
        assert_eq!(rows.len(), n);
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        row_ptr.push(0);
        for mut row in rows {
            row.sort_by_key(|e| e.0);
            let start = cols.len();
            for (c, v) in row {
                assert!(c < n, "column {c} out of range");
                if cols.len() > start && *cols.last().expect("non-empty") == c {
                    *vals.last_mut().expect("non-empty") += v;
                } else {
                    cols.push(c);
                    vals.push(v);
                }
            }
            row_ptr.push(cols.len());
        }
        CsrMatrix { n, row_ptr, cols, vals }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        self.cols[r.clone()].iter().copied().zip(self.vals[r].iter().copied())
    }

    pub fn diag(&self, i: usize) -> f64 {
        self.row(i).find(|e| e.0 == i).map_or(0.0, |e| e.1)
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n).map(|i| self.row(i).map(|(c, v)| v * x[c]).sum()).collect()
    }

    /// Largest `|i - j|` over stored entries.
    pub fn bandwidth(&self) -> usize {
        (0..self.n).flat_map(|i| self.row(i).map(move |(c, _)| c.abs_diff(i))).max().unwrap_or(0)
    }

    /// Matrix Market coordinate format, 1-based, values in `%.17e`.
    pub fn to_matrix_market(&self) -> String {
        let mut s = String::new();
        s.push_str("%%MatrixMarket matrix coordinate real general\n");
        let _ = writeln!(s, "{} {} {}", self.n, self.n, self.nnz());
        for i in 0..self.n {
            for (c, v) in self.row(i) {
                let _ = writeln!(s, "{} {} {:.16e}", i + 1, c + 1, v);
            }
        }
        s
    }
}

/// LU factors of a banded matrix, computed without pivoting.
///
/// Only valid for matrices where Gaussian elimination is stable without
/// row exchanges, which includes every nonsingular M-matrix.
#[derive(Debug, Clone)]
pub struct BandedLu {
    n: usize,
    b: usize,
    data: Vec<f64>,
}

impl BandedLu {
    fn idx(&self, i: usize, j: usize) -> usize {
        i * (2 * self.b + 1) + (j + self.b - i)
    }

    /// Factor the matrix whose rows are given as `(col, value)` lists. Entries
    /// farther than `b` from the diagonal are ignored by the caller's contract;
    /// here they trigger a panic.
    pub fn factor<'a>(
        n: usize,
        b: usize,
        rows: impl Fn(usize) -> Vec<(usize, f64)> + 'a,
    ) -> Result<Self, LinalgError> {
        let width = 2 * b + 1;
        let mut lu = BandedLu { n, b, data: vec![0.0; n * width] };
        for i in 0..n {
            for (j, v) in rows(i) {
                assert!(j.abs_diff(i) <= b, "entry ({i}, {j}) outside band {b}");
                let k = lu.idx(i, j);
                lu.data[k] += v;
            }
        }
        for k in 0..n {
            let pivot = lu.data[lu.idx(k, k)];
            if pivot == 0.0 || !pivot.is_finite() {
                return Err(LinalgError::SingularSystem { row: k });
            }
            let end = (k + b + 1).min(n);
            for i in (k + 1)..end {
                let ik = lu.idx(i, k);
                let l = lu.data[ik] / pivot;
                if l == 0.0 {
                    continue;
                }
                lu.data[ik] = l;
                for j in (k + 1)..end {
                    let kj = lu.data[lu.idx(k, j)];
                    let ij = lu.idx(i, j);
                    lu.data[ij] -= l * kj;
                }
            }
        }
        Ok(lu)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let (n, b) = (self.n, self.b);
        let mut x = rhs.to_vec();
        for i in 0..n {
            let start = i.saturating_sub(b);
            let mut s = x[i];
            for j in start..i {
                s -= self.data[self.idx(i, j)] * x[j];
            }
            x[i] = s;
        }
        for i in (0..n).rev() {
            let end = (i + b + 1).min(n);
            let mut s = x[i];
            for j in (i + 1)..end {
                s -= self.data[self.idx(i, j)] * x[j];
            }
            x[i] = s / self.data[self.idx(i, i)];
        }
        x
    }
}

pub fn sup_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

pub fn sup_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()))
}
