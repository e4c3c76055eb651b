//! Minimal dense matrix support for the factorization code.
//!
//! The preference matrices this crate factors are small (tens to low
//! hundreds of rows), so a flat row-major matrix with straightforward loops
//! is all that is needed; no BLAS, no sparsity.

use crate::scalar::{fl, Scalar};

/// Dense row-major matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Mat<F> {
    rows: usize,
    cols: usize,
    data: Vec<F>,
}

impl<F: Scalar> Mat<F> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat {
            rows,
            cols,
            data: vec![F::zero(); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Mat::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = F::one();
        }
        m
    }

    /// Builds from a row-major closure.
    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> F) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Mat { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    /// Row `r` as a slice.
    pub fn row(&self, r: usize) -> &[F] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [F] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// `self * other`.
    pub fn matmul(&self, other: &Mat<F>) -> Mat<F> {
        assert_eq!(self.cols, other.rows, "inner dimensions must agree");
        let mut out = Mat::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == F::zero() {
                    continue;
                }
                for j in 0..other.cols {
                    out[(i, j)] = out[(i, j)] + a * other[(k, j)];
                }
            }
        }
        out
    }

    /// `self^T * other` without materializing the transpose.
    pub fn gram_with(&self, other: &Mat<F>) -> Mat<F> {
        assert_eq!(self.rows, other.rows, "row counts must agree");
        let mut out = Mat::zeros(self.cols, other.cols);
        for r in 0..self.rows {
            let a = self.row(r);
            let b = other.row(r);
            for i in 0..self.cols {
                if a[i] == F::zero() {
                    continue;
                }
                for j in 0..other.cols {
                    out[(i, j)] = out[(i, j)] + a[i] * b[j];
                }
            }
        }
        out
    }

    /// Squared Frobenius norm.
    pub fn frob_sq(&self) -> F {
        self.data.iter().map(|&v| v * v).sum()
    }

    /// Euclidean norm of column `c`.
    pub fn col_norm(&self, c: usize) -> F {
        (0..self.rows)
            .map(|r| {
                let v = self[(r, c)];
                v * v
            })
            .sum::<F>()
            .sqrt()
    }

    /// Scales column `c` in place.
    pub fn scale_col(&mut self, c: usize, s: F) {
        for r in 0..self.rows {
            self[(r, c)] = self[(r, c)] * s;
        }
    }

    /// Keeps the first `k` columns.
    pub fn take_cols(&self, k: usize) -> Mat<F> {
        assert!(k <= self.cols);
        Mat::from_fn(self.rows, k, |r, c| self[(r, c)])
    }

    /// Reorders columns by the given index list.
    pub fn permute_cols(&self, order: &[usize]) -> Mat<F> {
        Mat::from_fn(self.rows, order.len(), |r, c| self[(r, order[c])])
    }
}

impl<F: Scalar> std::ops::Index<(usize, usize)> for Mat<F> {
    type Output = F;
    fn index(&self, (r, c): (usize, usize)) -> &F {
        debug_assert!(r < self.rows && c < self.cols);
        &self.data[r * self.cols + c]
    }
}

impl<F: Scalar> std::ops::IndexMut<(usize, usize)> for Mat<F> {
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut F {
        debug_assert!(r < self.rows && c < self.cols);
        &mut self.data[r * self.cols + c]
    }
}

/// Solves `X * G = B` for `X` given a symmetric `G` (the normal-equation
/// shape used by alternating least squares, one solve per row of `B`).
///
/// Uses LU with partial pivoting; if `G` is numerically singular the system
/// is re-solved with a small ridge `1e-10` added to the diagonal, which is
/// the standard guard for rank-deficient factors.
pub fn solve_gram<F: Scalar>(g: &Mat<F>, b: &Mat<F>) -> Mat<F> {
    assert_eq!(g.rows(), g.cols(), "Gram matrix must be square");
    assert_eq!(b.cols(), g.rows(), "B width must match Gram size");
    match lu_solve_rows(g, b) {
        Some(x) => x,
        None => {
            let ridge = fl::<F>(1e-10);
            let scale = F::one() + trace(g).abs() / fl::<F>(g.rows().max(1) as f64);
            let mut regularized = g.clone();
            for i in 0..g.rows() {
                regularized[(i, i)] = regularized[(i, i)] + ridge * scale;
            }
            lu_solve_rows(&regularized, b)
                .expect("ridge-regularized Gram matrix is nonsingular")
        }
    }
}

fn trace<F: Scalar>(m: &Mat<F>) -> F {
    (0..m.rows().min(m.cols())).map(|i| m[(i, i)]).sum()
}

/// LU solve of `x_row * G = b_row` for every row of `B`; `None` when a pivot
/// collapses.
fn lu_solve_rows<F: Scalar>(g: &Mat<F>, b: &Mat<F>) -> Option<Mat<F>> {
    let n = g.rows();
    // G is symmetric, so solving G x = b_row^T row by row is the same system.
    let mut lu = g.clone();
    let mut perm: Vec<usize> = (0..n).collect();
    let scale = lu
        .data
        .iter()
        .fold(F::zero(), |acc, &v| acc.max(v.abs()))
        .max(F::one());
    let tiny = fl::<F>(1e-13) * scale;

    for k in 0..n {
        // Partial pivot.
        let mut best = k;
        let mut best_abs = lu[(k, k)].abs();
        for r in k + 1..n {
            let a = lu[(r, k)].abs();
            if a > best_abs {
                best = r;
                best_abs = a;
            }
        }
        if best_abs <= tiny {
            return None;
        }
        if best != k {
            perm.swap(k, best);
            for c in 0..n {
                let tmp = lu[(k, c)];
                lu[(k, c)] = lu[(best, c)];
                lu[(best, c)] = tmp;
            }
        }
        let pivot = lu[(k, k)];
        for r in k + 1..n {
            let factor = lu[(r, k)] / pivot;
            lu[(r, k)] = factor;
            for c in k + 1..n {
                lu[(r, c)] = lu[(r, c)] - factor * lu[(k, c)];
            }
        }
    }

    let mut x = Mat::zeros(b.rows(), n);
    let mut y = vec![F::zero(); n];
    for row in 0..b.rows() {
        let rhs = b.row(row);
        for k in 0..n {
            let mut v = rhs[perm[k]];
            for c in 0..k {
                v = v - lu[(k, c)] * y[c];
            }
            y[k] = v;
        }
        for k in (0..n).rev() {
            let mut v = y[k];
            for c in k + 1..n {
                v = v - lu[(k, c)] * x[(row, c)];
            }
            x[(row, k)] = v / lu[(k, k)];
        }
    }
    Some(x)
}
