//! CP tensor decomposition by alternating least squares.
//!
//! The `n × n × m` tensor of stacked preference matrices is approximated by
//! a sum of `p` rank-one tensors `λ_j · u_j ∘ v_j ∘ w_j`. Each ALS step
//! solves the linear least-squares problem for one factor matrix through the
//! Khatri-Rao normal equations while the other two are held fixed, which
//! makes the fit non-increasing sweep over sweep. Factor columns are
//! renormalized after every sweep with the magnitudes absorbed into `λ`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::linalg::{solve_gram, Mat};
use crate::scalar::{fl, Scalar};

/// Default sweep cap.
pub const DEFAULT_MAX_SWEEPS: usize = 50;
/// Default relative fit-change stopping tolerance.
pub const DEFAULT_TOL: f64 = 1e-6;

/// Rank-`p` CP decomposition of an `n × n × m` tensor.
#[derive(Clone, Debug)]
pub struct CpDecomposition<F> {
    /// `n × p` first item-mode factor, unit columns.
    pub u: Mat<F>,
    /// `n × p` second item-mode factor, unit columns.
    pub v: Mat<F>,
    /// `m × p` input-mode factor, unit columns.
    pub w: Mat<F>,
    /// Non-negative component magnitudes.
    pub lambda: Vec<F>,
    /// Frobenius fit error after each sweep, non-increasing.
    pub fit_history: Vec<F>,
}

impl<F: Scalar> CpDecomposition<F> {
    /// Entry `(a, b, i)` of the reconstruction.
    pub fn reconstruct_entry(&self, a: usize, b: usize, i: usize) -> F {
        (0..self.lambda.len())
            .map(|j| self.lambda[j] * self.u[(a, j)] * self.v[(b, j)] * self.w[(i, j)])
            .sum()
    }

    /// Frobenius error against the slices the tensor was built from.
    pub fn fit_error(&self, slices: &[Mat<F>]) -> F {
        frob_error(slices, &self.u, &self.v, &self.w, &self.lambda)
    }
}

fn frob_error<F: Scalar>(
    slices: &[Mat<F>],
    u: &Mat<F>,
    v: &Mat<F>,
    w: &Mat<F>,
    lambda: &[F],
) -> F {
    let n = u.rows();
    let p = lambda.len();
    let mut total = F::zero();
    for (i, slice) in slices.iter().enumerate() {
        for a in 0..n {
            for b in 0..n {
                let mut rec = F::zero();
                for j in 0..p {
                    rec = rec + lambda[j] * u[(a, j)] * v[(b, j)] * w[(i, j)];
                }
                let d = slice[(a, b)] - rec;
                total = total + d * d;
            }
        }
    }
    total.sqrt()
}

/// Hadamard product of two square matrices.
fn hadamard<F: Scalar>(a: &Mat<F>, b: &Mat<F>) -> Mat<F> {
    Mat::from_fn(a.rows(), a.cols(), |r, c| a[(r, c)] * b[(r, c)])
}

/// CP-ALS of the tensor whose frontal slices are `slices` (each `n × n`,
/// slice `i` being ranking input `i`'s preference matrix).
///
/// Factors are initialized uniformly in `[-0.5, 0.5]` from the given seed,
/// so the result is deterministic per seed. Stops after `max_sweeps` sweeps
/// or when the relative fit change drops below `tol`. Rank-deficient normal
/// equations are handled inside the solver by a tiny ridge.
pub fn cp_als<F: Scalar>(
    slices: &[Mat<F>],
    p: usize,
    max_sweeps: usize,
    tol: f64,
    seed: u64,
) -> Result<CpDecomposition<F>> {
    let m = slices.len();
    if m == 0 {
        return Err(Error::data("CP decomposition of an empty tensor"));
    }
    let n = slices[0].rows();
    for s in slices {
        if s.rows() != n || s.cols() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: s.rows().max(s.cols()),
            });
        }
        if !s.is_finite() {
            return Err(Error::data("tensor slice contains non-finite entries"));
        }
    }
    if p == 0 || p > n {
        return Err(Error::data(format!(
            "CP rank {p} out of range 1..={n}"
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut init = |rows: usize| {
        Mat::from_fn(rows, p, |_, _| fl::<F>(rng.gen_range(-0.5..0.5)))
    };
    let mut u = init(n);
    let mut v = init(n);
    let mut w = init(m);
    let mut lambda = vec![F::one(); p];
    let mut fit_history = Vec::with_capacity(max_sweeps);
    let mut last_err: Option<F> = None;

    for _ in 0..max_sweeps {
        // Fold λ back into U so the sweep works on raw factors; the
        // reconstruction Σ_j u_j ∘ v_j ∘ w_j is unchanged.
        for j in 0..p {
            u.scale_col(j, lambda[j]);
        }
        lambda = vec![F::one(); p];

        // Mode 1: U <- M1 (W ⊙ V) [(W^T W) * (V^T V)]^-1 with
        // M1[a, j] = Σ_i Σ_b T[a, b, i] V[b, j] W[i, j].
        let mut m1 = Mat::zeros(n, p);
        for (i, slice) in slices.iter().enumerate() {
            let sv = slice.matmul(&v);
            for a in 0..n {
                for j in 0..p {
                    m1[(a, j)] = m1[(a, j)] + sv[(a, j)] * w[(i, j)];
                }
            }
        }
        u = solve_gram(&hadamard(&v.gram_with(&v), &w.gram_with(&w)), &m1);

        // Mode 2: M2[b, j] = Σ_i Σ_a T[a, b, i] U[a, j] W[i, j]; the slice
        // enters transposed.
        let mut m2 = Mat::zeros(n, p);
        for (i, slice) in slices.iter().enumerate() {
            for b in 0..n {
                for j in 0..p {
                    let mut acc = F::zero();
                    for a in 0..n {
                        acc = acc + slice[(a, b)] * u[(a, j)];
                    }
                    m2[(b, j)] = m2[(b, j)] + acc * w[(i, j)];
                }
            }
        }
        v = solve_gram(&hadamard(&u.gram_with(&u), &w.gram_with(&w)), &m2);

        // Mode 3: M3[i, j] = Σ_a Σ_b T[a, b, i] U[a, j] V[b, j].
        let mut m3 = Mat::zeros(m, p);
        for (i, slice) in slices.iter().enumerate() {
            let sv = slice.matmul(&v);
            for j in 0..p {
                let mut acc = F::zero();
                for a in 0..n {
                    acc = acc + u[(a, j)] * sv[(a, j)];
                }
                m3[(i, j)] = acc;
            }
        }
        w = solve_gram(&hadamard(&u.gram_with(&u), &v.gram_with(&v)), &m3);

        // Renormalize columns into λ.
        for j in 0..p {
            let (nu, nv, nw) = (u.col_norm(j), v.col_norm(j), w.col_norm(j));
            lambda[j] = nu * nv * nw;
            if nu > F::zero() {
                u.scale_col(j, nu.recip());
            }
            if nv > F::zero() {
                v.scale_col(j, nv.recip());
            }
            if nw > F::zero() {
                w.scale_col(j, nw.recip());
            }
        }

        let err = frob_error(slices, &u, &v, &w, &lambda);
        fit_history.push(err);
        if let Some(prev) = last_err {
            let scale = fit_history[0].max(fl(1e-12));
            if (prev - err).abs() / scale < fl(tol) {
                break;
            }
        }
        last_err = Some(err);
    }

    Ok(CpDecomposition {
        u,
        v,
        w,
        lambda,
        fit_history,
    })
}
