//! Feature mappings of partial rankings for supervised aggregation.
//!
//! Three mappings turn a query's ranking inputs into per-item feature
//! vectors:
//!
//! * **BF**: per-input normalized Borda scores `(n - pos) / n`, zero when
//!   the input omits the item; dimension `m`.
//! * **MF**: each input becomes a signed preference matrix which is
//!   factored by a truncated SVD of rank `p`; an item's features are its row
//!   of `U`, the `p` singular values, and its row of `V`, concatenated over
//!   inputs; dimension `3 * p * m`. The singular-value block repeats the same
//!   values for every item of a query, which keeps the per-input scale
//!   visible to the linear model; [`FeatureConfig::drop_mf_sigma`] removes it
//!   for ablation.
//! * **TF**: the preference matrices are stacked into an `n × n × m` tensor
//!   and factored once by CP-ALS of rank `p`; an item's features are its rows
//!   of the two item-mode factors; dimension `2 * p`.

pub mod cp;
pub mod svd;

use crate::error::{Error, Result};
use crate::linalg::Mat;
use crate::model::{FeatureTable, MappingKind, PartialRanking, QueryInstance};
use crate::scalar::{fl_usize, Scalar};

pub use cp::{cp_als, CpDecomposition};
pub use svd::{truncated_svd, TruncatedSvd};

/// Signed pairwise preference matrix of one ranking input.
///
/// Entry `(a, b)` is `+1` when the input ranks both items and places `a`
/// better, `-1` in the opposite case, and `0` when either item is absent or
/// on the diagonal. Skew-symmetric by construction.
pub fn preference_matrix<F: Scalar>(tau: &PartialRanking, n: usize) -> Mat<F> {
    assert_eq!(tau.item_count(), n, "ranking covers a different item count");
    let mut m = Mat::zeros(n, n);
    for a in 0..n {
        let pa = match tau.position(crate::model::ItemId(a)) {
            Some(p) => p,
            None => continue,
        };
        for b in 0..n {
            if a == b {
                continue;
            }
            if let Some(pb) = tau.position(crate::model::ItemId(b)) {
                m[(a, b)] = if pa < pb {
                    F::one()
                } else {
                    -F::one()
                };
            }
        }
    }
    m
}

/// Configuration of a feature mapping.
#[derive(Clone, Copy, Debug)]
pub struct FeatureConfig {
    pub kind: MappingKind,
    /// Factor rank `p` of the SVD/CP mappings; ignored by BF.
    pub rank: usize,
    /// Seed for the CP initialization; ignored by BF and MF.
    pub seed: u64,
    /// Rescale every feature column of a query to `[0, 1]` (constant columns
    /// map to 0). Off by default.
    pub minmax: bool,
    /// Drop the per-query-constant singular-value block from MF features.
    pub drop_mf_sigma: bool,
    /// CP-ALS sweep cap.
    pub cp_max_sweeps: usize,
    /// CP-ALS relative fit-change stopping tolerance.
    pub cp_tol: f64,
}

impl FeatureConfig {
    pub fn new(kind: MappingKind, rank: usize, seed: u64) -> Self {
        FeatureConfig {
            kind,
            rank,
            seed,
            minmax: false,
            drop_mf_sigma: false,
            cp_max_sweeps: cp::DEFAULT_MAX_SWEEPS,
            cp_tol: cp::DEFAULT_TOL,
        }
    }
}

/// Computes the feature table of one query under the given mapping.
///
/// Errors when the factor rank exceeds the item count (SVD/CP mappings) or
/// is zero for a mapping that needs it.
pub fn map_features<F: Scalar>(q: &QueryInstance, config: &FeatureConfig) -> Result<FeatureTable<F>> {
    let n = q.n();
    let p = config.rank;
    if config.kind.uses_rank() {
        if p == 0 {
            return Err(Error::data("factor rank must be at least 1"));
        }
        if p > n {
            return Err(Error::data(format!(
                "query {}: factor rank {p} exceeds item count {n}",
                q.query_id
            )));
        }
    }

    let mut vectors = match config.kind {
        MappingKind::BordaFeatures => borda_features(q),
        MappingKind::MatrixFactors => matrix_features(q, p, config.drop_mf_sigma)?,
        MappingKind::TensorFactors => tensor_features(q, p, config)?,
    };
    if config.minmax {
        minmax_normalize(&mut vectors);
    }
    Ok(FeatureTable {
        kind: config.kind,
        factor_rank: if config.kind.uses_rank() { p } else { 0 },
        vectors,
    })
}

/// BF: `(n - pos) / n` per input, zero for absent items. Values lie in
/// `[0, 1)` for ranked items.
fn borda_features<F: Scalar>(q: &QueryInstance) -> Vec<Vec<F>> {
    let n = q.n();
    let nf = fl_usize::<F>(n);
    q.items()
        .map(|item| {
            q.inputs
                .iter()
                .map(|tau| match tau.position(item) {
                    Some(pos) => (nf - fl_usize::<F>(pos as usize)) / nf,
                    None => F::zero(),
                })
                .collect()
        })
        .collect()
}

/// MF: concatenated `[U(item,:), σ_1..σ_p, V(item,:)]` per input.
fn matrix_features<F: Scalar>(
    q: &QueryInstance,
    p: usize,
    drop_sigma: bool,
) -> Result<Vec<Vec<F>>> {
    let n = q.n();
    let per_input = if drop_sigma { 2 * p } else { 3 * p };
    let mut vectors = vec![Vec::with_capacity(per_input * q.m()); n];
    for tau in &q.inputs {
        let pref = preference_matrix::<F>(tau, n);
        let svd = truncated_svd(&pref, p)?;
        for item in 0..n {
            let v = &mut vectors[item];
            v.extend_from_slice(svd.u.row(item));
            if !drop_sigma {
                v.extend_from_slice(&svd.sigma);
            }
            v.extend_from_slice(svd.v.row(item));
        }
    }
    Ok(vectors)
}

/// TF: `[U(item,:), V(item,:)]` from one CP factorization of the stacked
/// preference tensor.
fn tensor_features<F: Scalar>(
    q: &QueryInstance,
    p: usize,
    config: &FeatureConfig,
) -> Result<Vec<Vec<F>>> {
    let n = q.n();
    let slices: Vec<Mat<F>> = q
        .inputs
        .iter()
        .map(|tau| preference_matrix::<F>(tau, n))
        .collect();
    let cp = cp_als(
        &slices,
        p,
        config.cp_max_sweeps,
        config.cp_tol,
        config.seed,
    )?;
    Ok((0..n)
        .map(|item| {
            let mut v = Vec::with_capacity(2 * p);
            v.extend_from_slice(cp.u.row(item));
            v.extend_from_slice(cp.v.row(item));
            v
        })
        .collect())
}

/// Per-query min-max rescaling of each feature column to `[0, 1]`; constant
/// columns become 0.
fn minmax_normalize<F: Scalar>(vectors: &mut [Vec<F>]) {
    if vectors.is_empty() {
        return;
    }
    let d = vectors[0].len();
    for c in 0..d {
        let mut lo = F::infinity();
        let mut hi = F::neg_infinity();
        for v in vectors.iter() {
            lo = lo.min(v[c]);
            hi = hi.max(v[c]);
        }
        let span = hi - lo;
        for v in vectors.iter_mut() {
            v[c] = if span > F::zero() {
                (v[c] - lo) / span
            } else {
                F::zero()
            };
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ItemId;

    fn ranking(positions: Vec<Option<u32>>) -> PartialRanking {
        PartialRanking::new(positions).unwrap()
    }

    fn chain_instance() -> QueryInstance {
        QueryInstance::new(
            "q1".into(),
            vec!["a".into(), "b".into(), "c".into(), "d".into()],
            vec![
                ranking(vec![Some(1), Some(2), None, None]),
                ranking(vec![None, Some(1), Some(2), None]),
                ranking(vec![None, None, Some(1), Some(2)]),
            ],
            None,
        )
        .unwrap()
    }

    #[test]
    fn preference_matrix_is_signed_and_skew() {
        let tau = ranking(vec![Some(1), Some(2), None]);
        let m = preference_matrix::<f64>(&tau, 3);
        assert_eq!(m[(0, 1)], 1.0);
        assert_eq!(m[(1, 0)], -1.0);
        // Absent item: zero row and column.
        for i in 0..3 {
            assert_eq!(m[(2, i)], 0.0);
            assert_eq!(m[(i, 2)], 0.0);
            assert_eq!(m[(i, i)], 0.0);
        }
    }

    #[test]
    fn borda_features_worked_values() {
        let q = chain_instance();
        let table = map_features::<f64>(
            &q,
            &FeatureConfig::new(MappingKind::BordaFeatures, 0, 0),
        )
        .unwrap();
        assert_eq!(table.dim(), 3);
        // Item a: ranked first of four in input 1 only.
        assert_eq!(table.row(ItemId(0)), &[0.75, 0.0, 0.0]);
        // Item b: second in input 1, first in input 2.
        assert_eq!(table.row(ItemId(1)), &[0.5, 0.75, 0.0]);
    }

    #[test]
    fn identical_inputs_give_identical_bf_blocks() {
        let tau = ranking(vec![Some(2), Some(1), Some(3)]);
        let q = QueryInstance::new(
            "q".into(),
            vec!["x".into(), "y".into(), "z".into()],
            vec![tau.clone(), tau],
            None,
        )
        .unwrap();
        let table = map_features::<f64>(
            &q,
            &FeatureConfig::new(MappingKind::BordaFeatures, 0, 0),
        )
        .unwrap();
        for item in q.items() {
            let row = table.row(item);
            assert_eq!(row[0], row[1]);
        }
    }

    #[test]
    fn mapping_dimensions() {
        let q = chain_instance();
        let bf = map_features::<f64>(&q, &FeatureConfig::new(MappingKind::BordaFeatures, 0, 0))
            .unwrap();
        assert_eq!(bf.dim(), q.m());
        let mf = map_features::<f64>(&q, &FeatureConfig::new(MappingKind::MatrixFactors, 2, 0))
            .unwrap();
        assert_eq!(mf.dim(), 3 * 2 * q.m());
        let tf = map_features::<f64>(&q, &FeatureConfig::new(MappingKind::TensorFactors, 2, 7))
            .unwrap();
        assert_eq!(tf.dim(), 2 * 2);
        // Dropping the sigma block shrinks MF to 2pm.
        let mut cfg = FeatureConfig::new(MappingKind::MatrixFactors, 2, 0);
        cfg.drop_mf_sigma = true;
        let mf2 = map_features::<f64>(&q, &cfg).unwrap();
        assert_eq!(mf2.dim(), 2 * 2 * q.m());
    }

    #[test]
    fn rank_larger_than_item_count_errors() {
        let q = chain_instance();
        let cfg = FeatureConfig::new(MappingKind::MatrixFactors, 5, 0);
        assert!(map_features::<f64>(&q, &cfg).is_err());
        let cfg = FeatureConfig::new(MappingKind::TensorFactors, 5, 0);
        assert!(map_features::<f64>(&q, &cfg).is_err());
    }

    #[test]
    fn mf_sigma_block_is_constant_per_query() {
        let q = chain_instance();
        let p = 2;
        let table =
            map_features::<f64>(&q, &FeatureConfig::new(MappingKind::MatrixFactors, p, 0))
                .unwrap();
        // Sigma block of input 0 sits at columns p..2p.
        let first = &table.row(ItemId(0))[p..2 * p];
        for item in q.items() {
            assert_eq!(&table.row(item)[p..2 * p], first);
        }
    }

    #[test]
    fn tf_features_are_deterministic_per_seed() {
        let q = chain_instance();
        let cfg = FeatureConfig::new(MappingKind::TensorFactors, 2, 42);
        let a = map_features::<f64>(&q, &cfg).unwrap();
        let b = map_features::<f64>(&q, &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn minmax_rescales_columns() {
        let q = chain_instance();
        let mut cfg = FeatureConfig::new(MappingKind::BordaFeatures, 0, 0);
        cfg.minmax = true;
        let table = map_features::<f64>(&q, &cfg).unwrap();
        for c in 0..table.dim() {
            let col: Vec<f64> = q.items().map(|i| table.row(i)[c]).collect();
            let lo = col.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = col.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            assert_eq!(lo, 0.0);
            assert!(hi <= 1.0 + 1e-15);
        }
    }
}
