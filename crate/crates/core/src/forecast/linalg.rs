//! Dense linear algebra for the forecaster's normal equations: a row-major
//! matrix, Gram-matrix assembly, and two solvers — Cholesky for the
//! well-conditioned ridge path and Gaussian elimination with partial
//! pivoting as the fallback when the normal matrix is only barely positive
//! definite (or not at all, with λ = 0 on degenerate designs).
//!
//! Sizes here are small (hundreds of rows, tens of columns), so clarity
//! beats blocking: every routine is a direct textbook loop that an
//! independent oracle can reproduce term by term.

/// Row-major dense matrix of `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    /// Build from a closure over (row, col).
    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut m = Matrix::zeros(rows, cols);
        for r in 0..rows {
            for c in 0..cols {
                m.data[r * cols + c] = f(r, c);
            }
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn at(&self, r: usize, c: usize) -> f64 {
        debug_assert!(r < self.rows && c < self.cols);
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        debug_assert!(r < self.rows && c < self.cols);
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }
}

/// XᵀX — symmetric positive semi-definite Gram matrix of the design.
pub fn gram(x: &Matrix) -> Matrix {
    let n = x.cols;
    let mut g = Matrix::zeros(n, n);
    // Accumulate the upper triangle, then mirror: halves the work and
    // guarantees exact symmetry regardless of summation order.
    for i in 0..n {
        for j in i..n {
            let mut s = 0.0;
            for r in 0..x.rows {
                s += x.at(r, i) * x.at(r, j);
            }
            g.set(i, j, s);
            g.set(j, i, s);
        }
    }
    g
}

/// Xᵀy.
pub fn xt_y(x: &Matrix, y: &[f64]) -> Vec<f64> {
    debug_assert_eq!(x.rows, y.len());
    let mut out = vec![0.0; x.cols];
    for r in 0..x.rows {
        let row = x.row(r);
        for (o, &v) in out.iter_mut().zip(row) {
            *o += v * y[r];
        }
    }
    out
}

/// Solve A·w = b for symmetric positive-definite A by Cholesky
/// factorization. Returns `None` when a pivot is not strictly positive
/// (A not PD to working precision).
pub fn solve_cholesky(a: &Matrix, b: &[f64]) -> Option<Vec<f64>> {
    let n = a.rows;
    debug_assert_eq!(a.cols, n);
    debug_assert_eq!(b.len(), n);

    // Lower-triangular factor L with A = L·Lᵀ.
    let mut l = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let mut s = a.at(i, j);
            for k in 0..j {
                s -= l.at(i, k) * l.at(j, k);
            }
            if i == j {
                if s <= 0.0 || !s.is_finite() {
                    return None;
                }
                l.set(i, j, s.sqrt());
            } else {
                l.set(i, j, s / l.at(j, j));
            }
        }
    }

    // Forward solve L·z = b, then back solve Lᵀ·w = z.
    let mut z = vec![0.0; n];
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= l.at(i, k) * z[k];
        }
        z[i] = s / l.at(i, i);
    }
    let mut w = vec![0.0; n];
    for i in (0..n).rev() {
        let mut s = z[i];
        for k in i + 1..n {
            s -= l.at(k, i) * w[k];
        }
        w[i] = s / l.at(i, i);
    }
    Some(w)
}

/// Solve A·w = b by Gaussian elimination with partial pivoting. Returns
/// `None` when the matrix is singular to working precision (pivot below
/// an absolute floor scaled by the matrix magnitude).
pub fn solve_gauss(a: &Matrix, b: &[f64]) -> Option<Vec<f64>> {
    let n = a.rows;
    debug_assert_eq!(a.cols, n);
    debug_assert_eq!(b.len(), n);

    let mut m = a.clone();
    let mut rhs = b.to_vec();
    let scale = m
        .data
        .iter()
        .fold(0.0_f64, |acc, &v| acc.max(v.abs()))
        .max(1.0);
    let tol = scale * 1e-12;

    for col in 0..n {
        // Partial pivot: largest magnitude in this column at or below the
        // diagonal.
        let pivot_row = (col..n)
            .max_by(|&r1, &r2| {
                m.at(r1, col)
                    .abs()
                    .partial_cmp(&m.at(r2, col).abs())
                    .expect("pivot magnitudes are finite")
            })
            .expect("column range non-empty");
        if m.at(pivot_row, col).abs() < tol {
            return None;
        }
        if pivot_row != col {
            for c in 0..n {
                let tmp = m.at(col, c);
                m.set(col, c, m.at(pivot_row, c));
                m.set(pivot_row, c, tmp);
            }
            rhs.swap(col, pivot_row);
        }
        for r in col + 1..n {
            let factor = m.at(r, col) / m.at(col, col);
            if factor == 0.0 {
                continue;
            }
            for c in col..n {
                let v = m.at(r, c) - factor * m.at(col, c);
                m.set(r, c, v);
            }
            rhs[r] -= factor * rhs[col];
        }
    }

    let mut w = vec![0.0; n];
    for i in (0..n).rev() {
        let mut s = rhs[i];
        for k in i + 1..n {
            s -= m.at(i, k) * w[k];
        }
        w[i] = s / m.at(i, i);
    }
    Some(w)
}

/// Solve a symmetric system, preferring Cholesky and falling back to
/// pivoted elimination. `None` means singular either way.
pub fn solve_symmetric(a: &Matrix, b: &[f64]) -> Option<Vec<f64>> {
    solve_cholesky(a, b).or_else(|| solve_gauss(a, b))
}
