//! Rank distributions from pairwise contests.
//!
//! An item's rank (0 = best) is modeled as the number of pairwise contests it
//! loses: `R(j) = Σ_i X_ij` where `X_ij` is a Bernoulli variable with success
//! probability `p(i beats j)`. With independent contests the rank follows a
//! Poisson-binomial distribution. This module supplies the two contest
//! probability models (position-gap based for the unsupervised aggregators,
//! Gaussian score noise for trained models), the exact distribution by
//! sequential DP, its mean, a discretized normal approximation for smooth
//! objectives, and a brute-force enumerator used as a test oracle.

use crate::model::{ItemId, PartialRanking, RankDistribution};
use crate::scalar::{fl, fl_usize, Scalar};

/// Variance floor for the normal approximation; keeps the discretized
/// density well defined when all contests are near certain.
pub const VARIANCE_FLOOR: f64 = 1e-6;

/// Source of pairwise contest probabilities.
///
/// `prob(i, j)` is the probability that item `i` beats item `j`.
/// Implementations guarantee values in `[0, 1]` and complementarity
/// `prob(i, j) + prob(j, i) == 1` up to rounding.
pub trait PairwiseProb<F> {
    fn prob(&self, i: ItemId, j: ItemId) -> F;
}

impl<F, T: Fn(ItemId, ItemId) -> F> PairwiseProb<F> for T {
    fn prob(&self, i: ItemId, j: ItemId) -> F {
        self(i, j)
    }
}

/// Denominator of the position-gap contest probability.
///
/// The base probability of an upset is `|pos(i) - pos(j)|` over this
/// denominator. The item count of the whole query is the default; the size
/// of the input's present subset is available for sensitivity studies.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum GapDenominator {
    /// Divide position gaps by the query's item count `n`.
    #[default]
    ItemCount,
    /// Divide position gaps by the input's present count `k`.
    PresentCount,
}

/// Contest probability induced by one ranking input.
///
/// When both items are ranked, the position gap `|pos(i) - pos(j)|` scaled by
/// the denominator gives a base probability `p`; the better-placed item beats
/// the worse-placed one with probability `max(p, 1-p)`, the worse-placed item
/// wins the upset with `min(p, 1-p)`. When either item is absent the contest
/// is a coin flip.
///
/// Note the gap scaling is deliberately kept exactly in this form even though
/// it makes the upset probability non-monotone in the gap once `p` crosses
/// 1/2; see [`GapDenominator`] for the configurable denominator.
///
/// Panics when `i == j`: an item never contests itself.
pub fn pairwise_prob_unsup<F: Scalar>(
    tau: &PartialRanking,
    n: usize,
    denom: GapDenominator,
    i: ItemId,
    j: ItemId,
) -> F {
    assert_ne!(i, j, "pairwise contest of an item against itself");
    let half = fl::<F>(0.5);
    let (pi, pj) = match (tau.position(i), tau.position(j)) {
        (Some(a), Some(b)) => (a, b),
        _ => return half,
    };
    let d = match denom {
        GapDenominator::ItemCount => n,
        GapDenominator::PresentCount => tau.present_count(),
    };
    let gap = fl_usize::<F>(pi.abs_diff(pj) as usize) / fl_usize::<F>(d);
    let upset = gap.min(F::one() - gap);
    if pi > pj {
        // i is placed worse than j; it only wins the upset.
        upset
    } else {
        F::one() - upset
    }
}

/// Contest probability under Gaussian score noise: each item's latent score
/// is normal around `scores[item]` with standard deviation `sigma`, and `i`
/// beats `j` when its draw is larger. Equals `Φ((s_i - s_j) / (σ√2))`.
///
/// Panics when `i == j`, when a score is not finite, or when `sigma` is not
/// strictly positive.
pub fn pairwise_prob_sup<F: Scalar>(scores: &[F], sigma: F, i: ItemId, j: ItemId) -> F {
    assert_ne!(i, j, "pairwise contest of an item against itself");
    assert!(
        sigma.is_finite() && sigma > F::zero(),
        "sigma must be positive and finite"
    );
    let (si, sj) = (scores[i.0], scores[j.0]);
    assert!(si.is_finite() && sj.is_finite(), "scores must be finite");
    ((si - sj) / (sigma * F::SQRT_2())).norm_cdf()
}

fn contest_probs<F: Scalar>(
    prob: &impl PairwiseProb<F>,
    j: ItemId,
    others: &[ItemId],
) -> Vec<F> {
    others
        .iter()
        .map(|&i| {
            assert_ne!(i, j, "opponent list contains the item itself");
            let p = prob.prob(i, j);
            assert!(
                p >= F::zero() && p <= F::one(),
                "contest probability {p} outside [0, 1]"
            );
            p
        })
        .collect()
}

/// Exact Poisson-binomial distribution of item `j`'s rank against `others`.
///
/// Sequential DP over opponents: after absorbing an opponent with win
/// probability `p`, `P(r) <- P_prev(r-1) * p + P_prev(r) * (1-p)`. The
/// opponent probabilities are put into a canonical order first, so the
/// result is bitwise identical no matter how the caller enumerates
/// opponents. With no opponents the distribution is a point mass at rank 0.
///
/// Panics if `others` contains `j` or any probability leaves `[0, 1]`.
pub fn rank_distribution_dp<F: Scalar>(
    prob: &impl PairwiseProb<F>,
    j: ItemId,
    others: &[ItemId],
) -> RankDistribution<F> {
    let mut ps = contest_probs(prob, j, others);
    // Canonical order: the PMF is symmetric in its parameters, sorting makes
    // that symmetry exact in floating point as well.
    ps.sort_unstable_by(|a, b| a.partial_cmp(b).expect("probabilities compare"));

    let mut mass = vec![F::zero(); ps.len() + 1];
    mass[0] = F::one();
    for (t, &p) in ps.iter().enumerate() {
        let q = F::one() - p;
        // Walk ranks downward so mass[r-1] is still the previous step.
        for r in (0..=t + 1).rev() {
            let stay = if r <= t { mass[r] * q } else { F::zero() };
            let lose = if r > 0 { mass[r - 1] * p } else { F::zero() };
            mass[r] = stay + lose;
        }
    }
    RankDistribution::new(mass).expect("DP produces a valid distribution")
}

/// Expected rank of item `j`: the sum of the opponents' win probabilities.
/// Equals the mean of [`rank_distribution_dp`] without building the PMF.
pub fn rank_mean<F: Scalar>(prob: &impl PairwiseProb<F>, j: ItemId, others: &[ItemId]) -> F {
    contest_probs(prob, j, others).into_iter().sum()
}

/// Mean and variance of item `j`'s rank: `μ = Σ p_i`, `v = Σ p_i (1 - p_i)`.
pub fn rank_moments<F: Scalar>(
    prob: &impl PairwiseProb<F>,
    j: ItemId,
    others: &[ItemId],
) -> (F, F) {
    let ps = contest_probs(prob, j, others);
    let mu = ps.iter().copied().sum();
    let var = ps.iter().map(|&p| p * (F::one() - p)).sum();
    (mu, var)
}

/// Discretizes a normal density with the given moments onto integer ranks
/// `0..len-1`: point-samples the density and renormalizes. The variance is
/// floored at [`VARIANCE_FLOOR`].
pub fn discretized_normal_pmf<F: Scalar>(mu: F, var: F, len: usize) -> Vec<F> {
    assert!(len >= 1, "discretization over zero ranks");
    let veff = var.max(fl(VARIANCE_FLOOR));
    let two = fl::<F>(2.0);
    let mut mass: Vec<F> = (0..len)
        .map(|r| {
            let d = fl_usize::<F>(r) - mu;
            (-(d * d) / (two * veff)).exp()
        })
        .collect();
    let z: F = mass.iter().copied().sum();
    debug_assert!(z > F::zero(), "discretized density vanished everywhere");
    for w in &mut mass {
        *w = *w / z;
    }
    mass
}

/// Normal approximation of the rank distribution of item `j`.
///
/// Matches the Poisson-binomial's mean and variance, then discretizes onto
/// ranks `0..|others|` via [`discretized_normal_pmf`]. Requires at least one
/// opponent.
pub fn rank_distribution_normal<F: Scalar>(
    prob: &impl PairwiseProb<F>,
    j: ItemId,
    others: &[ItemId],
) -> RankDistribution<F> {
    assert!(!others.is_empty(), "normal approximation needs an opponent");
    let (mu, var) = rank_moments(prob, j, others);
    RankDistribution::new(discretized_normal_pmf(mu, var, others.len() + 1))
        .expect("discretized normal is a valid distribution")
}

/// Brute-force Poisson-binomial by enumerating all 2^k contest outcomes.
/// Test oracle only; panics beyond 20 opponents.
pub fn brute_force_rank_distribution<F: Scalar>(
    prob: &impl PairwiseProb<F>,
    j: ItemId,
    others: &[ItemId],
) -> RankDistribution<F> {
    let ps = contest_probs(prob, j, others);
    let k = ps.len();
    assert!(k <= 20, "brute-force enumeration capped at 20 opponents");
    let mut mass = vec![F::zero(); k + 1];
    for outcome in 0u32..(1u32 << k) {
        let mut weight = F::one();
        let mut losses = 0usize;
        for (t, &p) in ps.iter().enumerate() {
            if outcome >> t & 1 == 1 {
                weight = weight * p;
                losses += 1;
            } else {
                weight = weight * (F::one() - p);
            }
        }
        mass[losses] = mass[losses] + weight;
    }
    RankDistribution::new(mass).expect("enumeration produces a valid distribution")
}

/// All items of a query except `j`, in id order. Convenience for the callers
/// that pit an item against the whole field.
pub fn opponents(n: usize, j: ItemId) -> Vec<ItemId> {
    (0..n).filter(|&i| i != j.0).map(ItemId).collect()
}
