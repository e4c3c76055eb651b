//! Truncated SVD by one-sided Jacobi rotations.
//!
//! The matrices factored here are small signed preference matrices, so a
//! dependency-free one-sided Jacobi (Hestenes) SVD is plenty: plane
//! rotations orthogonalize pairs of columns of a working copy of `M` until
//! all pairwise inner products vanish, at which point the column norms are
//! the singular values, the normalized columns form `U`, and the accumulated
//! rotations form `V`.

use crate::error::{Error, Result};
use crate::linalg::Mat;
use crate::scalar::{fl, Scalar};

/// Rank-`p` truncated SVD: `M ≈ U diag(σ) V^T` with orthonormal `U`, `V`
/// columns and `σ` sorted descending.
#[derive(Clone, Debug)]
pub struct TruncatedSvd<F> {
    /// `n × p` left singular vectors.
    pub u: Mat<F>,
    /// Top `p` singular values, non-negative and non-increasing.
    pub sigma: Vec<F>,
    /// `n × p` right singular vectors.
    pub v: Mat<F>,
}

impl<F: Scalar> TruncatedSvd<F> {
    /// Reconstruction `U diag(σ) V^T`.
    pub fn reconstruct(&self) -> Mat<F> {
        let n = self.u.rows();
        let p = self.sigma.len();
        Mat::from_fn(n, self.v.rows(), |r, c| {
            (0..p)
                .map(|k| self.u[(r, k)] * self.sigma[k] * self.v[(c, k)])
                .sum()
        })
    }
}

/// Computes the rank-`p` truncated SVD of a square matrix.
///
/// Errors when the matrix is not square, contains non-finite entries, or
/// `p` is not in `1..=n`. Zero singular directions (every nonzero
/// skew-symmetric matrix of odd size has at least one) get left singular
/// vectors completed to an orthonormal basis, so `U^T U = I` holds even for
/// rank-deficient input.
pub fn truncated_svd<F: Scalar>(m: &Mat<F>, p: usize) -> Result<TruncatedSvd<F>> {
    let n = m.rows();
    if m.cols() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: m.cols(),
        });
    }
    if !m.is_finite() {
        return Err(Error::data("matrix contains non-finite entries"));
    }
    if p == 0 || p > n {
        return Err(Error::data(format!(
            "truncation rank {p} out of range 1..={n}"
        )));
    }

    let mut a = m.clone();
    let mut v = Mat::identity(n);
    let eps = fl::<F>(1e-14);
    let max_sweeps = 64;

    for _ in 0..max_sweeps {
        let mut off = F::zero();
        for i in 0..n {
            for j in i + 1..n {
                let mut alpha = F::zero();
                let mut beta = F::zero();
                let mut gamma = F::zero();
                for r in 0..n {
                    let (x, y) = (a[(r, i)], a[(r, j)]);
                    alpha = alpha + x * x;
                    beta = beta + y * y;
                    gamma = gamma + x * y;
                }
                if alpha == F::zero() || beta == F::zero() {
                    continue;
                }
                let rel = gamma.abs() / (alpha * beta).sqrt();
                off = off.max(rel);
                if rel <= eps {
                    continue;
                }
                // Rotation zeroing the (i, j) entry of A^T A.
                let zeta = (beta - alpha) / (gamma + gamma);
                let t = zeta.signum() / (zeta.abs() + (F::one() + zeta * zeta).sqrt());
                let c = (F::one() + t * t).sqrt().recip();
                let s = c * t;
                for r in 0..n {
                    let (x, y) = (a[(r, i)], a[(r, j)]);
                    a[(r, i)] = c * x - s * y;
                    a[(r, j)] = s * x + c * y;
                }
                for r in 0..n {
                    let (x, y) = (v[(r, i)], v[(r, j)]);
                    v[(r, i)] = c * x - s * y;
                    v[(r, j)] = s * x + c * y;
                }
            }
        }
        if off <= eps {
            break;
        }
    }

    // Column norms are the singular values; sort them descending.
    let mut order: Vec<usize> = (0..n).collect();
    let norms: Vec<F> = (0..n).map(|c| a.col_norm(c)).collect();
    order.sort_by(|&x, &y| {
        norms[y]
            .partial_cmp(&norms[x])
            .expect("finite norms compare")
            .then(x.cmp(&y))
    });

    let a = a.permute_cols(&order);
    let v = v.permute_cols(&order);
    let sigma_full: Vec<F> = order.iter().map(|&c| norms[c]).collect();

    // Normalize columns of A into U; complete zero directions to an
    // orthonormal basis by Gram-Schmidt over unit vectors.
    let sigma_max = sigma_full.first().copied().unwrap_or(F::zero());
    let zero_cut = sigma_max * fl::<F>(1e-12);
    let mut u = Mat::zeros(n, n);
    for c in 0..n {
        if sigma_full[c] > zero_cut && sigma_full[c] > F::zero() {
            let inv = sigma_full[c].recip();
            for r in 0..n {
                u[(r, c)] = a[(r, c)] * inv;
            }
        } else {
            complete_column(&mut u, c);
        }
    }

    Ok(TruncatedSvd {
        u: u.take_cols(p),
        sigma: sigma_full[..p].to_vec(),
        v: v.take_cols(p),
    })
}

/// Fills column `c` of `u` with a unit vector orthogonal to columns `0..c`.
fn complete_column<F: Scalar>(u: &mut Mat<F>, c: usize) {
    let n = u.rows();
    for candidate in 0..n {
        // Start from a basis vector and orthogonalize twice for stability.
        let mut col = vec![F::zero(); n];
        col[candidate] = F::one();
        for _ in 0..2 {
            for k in 0..c {
                let dot: F = (0..n).map(|r| col[r] * u[(r, k)]).sum();
                for (r, item) in col.iter_mut().enumerate() {
                    *item = *item - dot * u[(r, k)];
                }
            }
        }
        let norm = col.iter().map(|&x| x * x).sum::<F>().sqrt();
        if norm > fl::<F>(1e-6) {
            let inv = norm.recip();
            for r in 0..n {
                u[(r, c)] = col[r] * inv;
            }
            return;
        }
    }
    unreachable!("some basis vector always survives projection");
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;

    fn orthonormality_defect(m: &Mat<f64>) -> f64 {
        let g = m.gram_with(m);
        let p = g.rows();
        let mut worst = 0.0f64;
        for i in 0..p {
            for j in 0..p {
                let want = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((g[(i, j)] - want).abs());
            }
        }
        worst
    }

    fn random_skew(n: usize, seed: u64) -> Mat<f64> {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut m = Mat::zeros(n, n);
        for i in 0..n {
            for j in i + 1..n {
                let v: f64 = rng.gen_range(-1.0..1.0);
                m[(i, j)] = v;
                m[(j, i)] = -v;
            }
        }
        m
    }

    #[test]
    fn diagonal_matrix_has_its_entries_as_singular_values() {
        let m = Mat::from_fn(3, 3, |r, c| {
            if r == c {
                [3.0, 1.0, 2.0][r]
            } else {
                0.0
            }
        });
        let svd: TruncatedSvd<f64> = truncated_svd(&m, 3).unwrap();
        assert!((svd.sigma[0] - 3.0).abs() < 1e-12);
        assert!((svd.sigma[1] - 2.0).abs() < 1e-12);
        assert!((svd.sigma[2] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_matrix_yields_zero_spectrum_and_orthonormal_u() {
        let m = Mat::<f64>::zeros(4, 4);
        let svd = truncated_svd(&m, 4).unwrap();
        assert!(svd.sigma.iter().all(|&s| s == 0.0));
        assert!(orthonormality_defect(&svd.u) < 1e-12);
    }

    #[test]
    fn full_rank_reconstruction_of_skew_matrix() {
        let m = random_skew(20, 7);
        let svd = truncated_svd(&m, 20).unwrap();
        let rec = svd.reconstruct();
        let mut err = 0.0f64;
        for r in 0..20 {
            for c in 0..20 {
                err += (m[(r, c)] - rec[(r, c)]).powi(2);
            }
        }
        assert!(err.sqrt() < 1e-8, "reconstruction error {}", err.sqrt());
        assert!(orthonormality_defect(&svd.u) < 1e-8);
        assert!(orthonormality_defect(&svd.v) < 1e-8);
    }

    #[test]
    fn truncation_error_matches_tail_energy() {
        for seed in [1, 2, 3] {
            let n = 12;
            let m = random_skew(n, seed);
            let full = truncated_svd(&m, n).unwrap();
            for p in [1usize, 3, 6, 11] {
                let svd = truncated_svd(&m, p).unwrap();
                let rec = svd.reconstruct();
                let mut err = 0.0f64;
                for r in 0..n {
                    for c in 0..n {
                        err += (m[(r, c)] - rec[(r, c)]).powi(2);
                    }
                }
                let tail: f64 = full.sigma[p..].iter().map(|s| s * s).sum();
                let scale = m.frob_sq().max(1e-12);
                assert!(
                    (err - tail).abs() <= 1e-6 * scale,
                    "p={p}: error {err} vs tail {tail}"
                );
            }
        }
    }

    #[test]
    fn odd_skew_matrices_have_a_zero_singular_value() {
        let m = random_skew(7, 11);
        let svd = truncated_svd(&m, 7).unwrap();
        assert!(svd.sigma[6].abs() < 1e-10);
        assert!(orthonormality_defect(&svd.u) < 1e-8);
    }

    #[test]
    fn rejects_bad_input() {
        let m = Mat::<f64>::zeros(3, 3);
        assert!(truncated_svd(&m, 0).is_err());
        assert!(truncated_svd(&m, 4).is_err());
        let mut bad = Mat::<f64>::zeros(2, 2);
        bad[(0, 1)] = f64::NAN;
        assert!(truncated_svd(&bad, 1).is_err());
    }

    #[test]
    fn singular_values_are_sorted_descending() {
        let m = random_skew(10, 3);
        let svd = truncated_svd(&m, 10).unwrap();
        for w in svd.sigma.windows(2) {
            assert!(w[0] >= w[1] - 1e-15);
        }
        assert!(svd.sigma.iter().all(|&s| s >= 0.0));
    }
}
