//! Unsupervised aggregators: Borda, RRF, and their stochastic variants.
//!
//! The explicit aggregators score an item only from the inputs that rank it,
//! which makes them brittle when inputs cover different subsets: an item a
//! single input places first can lose to an item many inputs place
//! mid-list. The stochastic variants replace an item's position in each
//! input by its full rank distribution (absent items get coin-flip
//! contests), so every input contributes a term for every item.
//!
//! Scores are summed in item-id and input order, so results are
//! deterministic; across queries the work is embarrassingly parallel and
//! [`aggregate_all`] preserves query order regardless of thread count.

use rayon::prelude::*;

use crate::model::{AggregateRun, QueryInstance, QueryRanking};
use crate::rankdist::{
    opponents, pairwise_prob_unsup, rank_distribution_dp, rank_mean, GapDenominator,
};
use crate::scalar::{fl, fl_usize, Scalar};

/// Default additive constant of reciprocal rank fusion.
pub const DEFAULT_RRF_C: f64 = 40.0;

/// The four aggregation methods, as named on the command line.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Method {
    Borda,
    Rrf,
    StochasticBorda,
    StochasticRrf,
}

impl Method {
    pub fn parse(s: &str) -> crate::Result<Self> {
        match s {
            "borda" => Ok(Method::Borda),
            "rrf" => Ok(Method::Rrf),
            "stagg-bc" => Ok(Method::StochasticBorda),
            "stagg-rrf" => Ok(Method::StochasticRrf),
            other => Err(crate::Error::InvalidData(format!(
                "unknown method {other:?} (expected borda, rrf, stagg-bc, or stagg-rrf)"
            ))),
        }
    }

    pub fn parse_list(s: &str) -> crate::Result<Vec<Self>> {
        s.split(',')
            .filter(|part| !part.trim().is_empty())
            .map(|part| Self::parse(part.trim()))
            .collect()
    }

    pub fn name(self) -> &'static str {
        match self {
            Method::Borda => "borda",
            Method::Rrf => "rrf",
            Method::StochasticBorda => "stagg-bc",
            Method::StochasticRrf => "stagg-rrf",
        }
    }
}

/// Knobs shared by the aggregators.
#[derive(Clone, Copy, Debug)]
pub struct AggregateParams<F> {
    /// Additive constant of the reciprocal rank formulas.
    pub rrf_c: F,
    /// Denominator of the position-gap contest probability.
    pub gap_denominator: GapDenominator,
}

impl<F: Scalar> Default for AggregateParams<F> {
    fn default() -> Self {
        AggregateParams {
            rrf_c: fl(DEFAULT_RRF_C),
            gap_denominator: GapDenominator::default(),
        }
    }
}

/// Borda count: an item scores `n - pos` for each input that ranks it and
/// nothing for inputs that do not. Deliberately not normalized by coverage,
/// which is exactly what makes it sensitive to missing items.
pub fn borda<F: Scalar>(q: &QueryInstance) -> QueryRanking<F> {
    let n = q.n();
    let scores: Vec<F> = q
        .items()
        .map(|item| {
            q.inputs
                .iter()
                .filter_map(|tau| tau.position(item))
                .map(|pos| fl_usize::<F>(n) - fl_usize::<F>(pos as usize))
                .sum()
        })
        .collect();
    QueryRanking::from_scores(q, &scores)
}

/// Reciprocal rank fusion: an item scores `1 / (C + pos)` for each input
/// that ranks it.
pub fn rrf<F: Scalar>(q: &QueryInstance, c: F) -> QueryRanking<F> {
    assert!(c > F::zero(), "RRF constant must be positive");
    let scores: Vec<F> = q
        .items()
        .map(|item| {
            q.inputs
                .iter()
                .filter_map(|tau| tau.position(item))
                .map(|pos| (c + fl_usize::<F>(pos as usize)).recip())
                .sum()
        })
        .collect();
    QueryRanking::from_scores(q, &scores)
}

/// Stochastic Borda count: the mean over inputs of `n - E[rank]`, where the
/// expected rank under each input sums that input's contest probabilities.
/// Every input contributes a term for every item; absent contests are coin
/// flips. Uses the closed-form expected rank, which equals the mean of the
/// full rank distribution.
pub fn stagg_bc<F: Scalar>(q: &QueryInstance, denom: GapDenominator) -> QueryRanking<F> {
    let n = q.n();
    let m = fl_usize::<F>(q.m());
    let nf = fl_usize::<F>(n);
    let scores: Vec<F> = q
        .items()
        .map(|item| {
            let others = opponents(n, item);
            let total: F = q
                .inputs
                .iter()
                .map(|tau| {
                    let prob = |i, j| pairwise_prob_unsup::<F>(tau, n, denom, i, j);
                    nf - rank_mean(&prob, item, &others)
                })
                .sum();
            total / m
        })
        .collect();
    QueryRanking::from_scores(q, &scores)
}

/// Stochastic reciprocal rank fusion: for each input, the expectation of
/// `1 / (rank + C)` under the item's full rank distribution, summed over
/// inputs. The full distribution matters here; by convexity of `1/(r + C)`
/// plugging the expected rank in would overweight uncertain items.
pub fn stagg_rrf<F: Scalar>(q: &QueryInstance, c: F, denom: GapDenominator) -> QueryRanking<F> {
    assert!(c > F::zero(), "RRF constant must be positive");
    let n = q.n();
    let scores: Vec<F> = q
        .items()
        .map(|item| {
            let others = opponents(n, item);
            q.inputs
                .iter()
                .map(|tau| {
                    let prob = |i, j| pairwise_prob_unsup::<F>(tau, n, denom, i, j);
                    let dist = rank_distribution_dp(&prob, item, &others);
                    dist.mass()
                        .iter()
                        .enumerate()
                        .map(|(r, &p)| p / (fl_usize::<F>(r) + c))
                        .sum::<F>()
                })
                .sum()
        })
        .collect();
    QueryRanking::from_scores(q, &scores)
}

/// Runs one method on one query.
pub fn aggregate_query<F: Scalar>(
    q: &QueryInstance,
    method: Method,
    params: &AggregateParams<F>,
) -> QueryRanking<F> {
    match method {
        Method::Borda => borda(q),
        Method::Rrf => rrf(q, params.rrf_c),
        Method::StochasticBorda => stagg_bc(q, params.gap_denominator),
        Method::StochasticRrf => stagg_rrf(q, params.rrf_c, params.gap_denominator),
    }
}

/// Runs one method over a whole dataset, in parallel across queries. The
/// output preserves query order and is independent of the thread count.
pub fn aggregate_all<F: Scalar>(
    instances: &[QueryInstance],
    method: Method,
    params: &AggregateParams<F>,
) -> AggregateRun<F> {
    let queries: Vec<QueryRanking<F>> = instances
        .par_iter()
        .map(|q| aggregate_query(q, method, params))
        .collect();
    AggregateRun::new(queries)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ItemId, PartialRanking};
    use proptest::prelude::*;

    /// Three pairwise inputs over items a, b, c, d (ids 0..3): a over b,
    /// b over c, c over d. Borda's blind spot: b and c outscore a.
    fn chain_instance() -> QueryInstance {
        let mk = |positions: Vec<Option<u32>>| PartialRanking::new(positions).unwrap();
        QueryInstance::new(
            "q1".into(),
            vec!["a".into(), "b".into(), "c".into(), "d".into()],
            vec![
                mk(vec![Some(1), Some(2), None, None]),
                mk(vec![None, Some(1), Some(2), None]),
                mk(vec![None, None, Some(1), Some(2)]),
            ],
            None,
        )
        .unwrap()
    }

    #[test]
    fn borda_prefers_frequently_covered_items() {
        let q = chain_instance();
        let run = borda::<f64>(&q);
        let scores: Vec<f64> = (0..4).map(|i| run.score_of(ItemId(i)).unwrap()).collect();
        assert_eq!(scores, vec![3.0, 5.0, 5.0, 2.0]);
        assert_eq!(run.doc_order(), vec!["b", "c", "a", "d"]);
    }

    #[test]
    fn stochastic_borda_recovers_the_chain() {
        let q = chain_instance();
        let run = stagg_bc::<f64>(&q, GapDenominator::ItemCount);
        // Total expected ranks over the three inputs: 4.25, 4.5, 4.5, 4.75.
        let expected = [4.25, 4.5, 4.5, 4.75];
        for (i, want) in expected.iter().enumerate() {
            let score = run.score_of(ItemId(i)).unwrap();
            let total = 12.0 - 3.0 * score;
            assert!((total - want).abs() < 1e-9, "item {i}: {total} vs {want}");
        }
        assert_eq!(run.doc_order(), vec!["a", "b", "c", "d"]);
        assert!((run.items[0].2 - (12.0 - 4.25) / 3.0).abs() < 1e-12);
    }

    #[test]
    fn rrf_worked_example() {
        let q = chain_instance();
        let run = rrf::<f64>(&q, 40.0);
        let a = run.score_of(ItemId(0)).unwrap();
        assert!((a - 1.0 / 41.0).abs() < 1e-15);
        let b = run.score_of(ItemId(1)).unwrap();
        assert!((b - (1.0 / 42.0 + 1.0 / 41.0)).abs() < 1e-15);
    }

    #[test]
    fn stagg_rrf_two_item_tie() {
        // One input ranking two items: the position gap of 1 among n = 2
        // folds to a coin flip, so both items share the same distribution.
        let q = QueryInstance::new(
            "q".into(),
            vec!["x".into(), "y".into()],
            vec![PartialRanking::new(vec![Some(1), Some(2)]).unwrap()],
            None,
        )
        .unwrap();
        let run = stagg_rrf::<f64>(&q, 40.0, GapDenominator::ItemCount);
        let want = 0.5 / 40.0 + 0.5 / 41.0;
        assert!((run.score_of(ItemId(0)).unwrap() - want).abs() < 1e-15);
        assert!((run.score_of(ItemId(1)).unwrap() - want).abs() < 1e-15);
        // Tie breaks toward the smaller id.
        assert_eq!(run.order(), vec![ItemId(0), ItemId(1)]);
    }

    #[test]
    fn single_item_scores() {
        let q = QueryInstance::new(
            "q".into(),
            vec!["only".into()],
            vec![PartialRanking::new(vec![Some(1)]).unwrap()],
            None,
        )
        .unwrap();
        let bc = stagg_bc::<f64>(&q, GapDenominator::ItemCount);
        assert_eq!(bc.score_of(ItemId(0)).unwrap(), 1.0);
        let srrf = stagg_rrf::<f64>(&q, 40.0, GapDenominator::ItemCount);
        assert!((srrf.score_of(ItemId(0)).unwrap() - 1.0 / 40.0).abs() < 1e-15);
    }

    #[test]
    fn stagg_bc_fast_path_matches_full_distributions() {
        // The closed-form expected rank must agree with the mean of the full
        // DP distribution input by input.
        let q = chain_instance();
        let n = q.n();
        let run = stagg_bc::<f64>(&q, GapDenominator::ItemCount);
        for item in q.items() {
            let others = opponents(n, item);
            let naive: f64 = q
                .inputs
                .iter()
                .map(|tau| {
                    let prob = |i, j| {
                        pairwise_prob_unsup::<f64>(tau, n, GapDenominator::ItemCount, i, j)
                    };
                    let dist = rank_distribution_dp(&prob, item, &others);
                    n as f64 - dist.mean()
                })
                .sum::<f64>()
                / q.m() as f64;
            assert!((run.score_of(item).unwrap() - naive).abs() < 1e-9);
        }
    }

    #[test]
    fn single_full_ranking_is_preserved() {
        // With one full input every aggregator must reproduce it.
        let order: Vec<ItemId> = [2usize, 0, 3, 1].into_iter().map(ItemId).collect();
        let q = QueryInstance::new(
            "q".into(),
            (0..4).map(|i| format!("d{i}")).collect(),
            vec![PartialRanking::from_order(4, &order).unwrap()],
            None,
        )
        .unwrap();
        let params = AggregateParams::<f64>::default();
        for method in [
            Method::Borda,
            Method::Rrf,
            Method::StochasticBorda,
            Method::StochasticRrf,
        ] {
            let run = aggregate_query(&q, method, &params);
            assert_eq!(run.order(), order, "{}", method.name());
        }
    }

    #[test]
    fn method_parsing() {
        assert_eq!(Method::parse("stagg-bc").unwrap(), Method::StochasticBorda);
        assert!(Method::parse("condorcet").is_err());
        let all = Method::parse_list("borda,rrf,stagg-bc,stagg-rrf").unwrap();
        assert_eq!(all.len(), 4);
    }

    prop_compose! {
        /// Random instance: n items, m inputs, each input ranking a random
        /// nonempty subset.
        fn arb_instance()(seed in 0u64..2000, n in 2usize..7, m in 1usize..5)
            -> QueryInstance
        {
            use rand::prelude::*;
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let inputs = (0..m)
                .map(|_| {
                    let mut items: Vec<usize> = (0..n).collect();
                    items.shuffle(&mut rng);
                    let k = rng.gen_range(1..=n);
                    let mut positions = vec![None; n];
                    for (t, &it) in items[..k].iter().enumerate() {
                        positions[it] = Some(t as u32 + 1);
                    }
                    PartialRanking::new(positions).unwrap()
                })
                .collect();
            QueryInstance::new(
                "q".into(),
                (0..n).map(|i| format!("d{i}")).collect(),
                inputs,
                None,
            )
            .unwrap()
        }
    }

    proptest! {
        #[test]
        fn aggregators_ignore_input_order(q in arb_instance(), swap in 0usize..16) {
            let params = AggregateParams::<f64>::default();
            let mut shuffled = q.clone();
            let m = shuffled.inputs.len();
            shuffled.inputs.swap(swap % m, (swap / 4) % m);
            shuffled.inputs.reverse();
            for method in [Method::Borda, Method::Rrf, Method::StochasticBorda, Method::StochasticRrf] {
                let a = aggregate_query(&q, method, &params);
                let b = aggregate_query(&shuffled, method, &params);
                for item in q.items() {
                    let x = a.score_of(item).unwrap();
                    let y = b.score_of(item).unwrap();
                    prop_assert!((x - y).abs() <= 1e-12, "{}: {x} vs {y}", method.name());
                }
            }
        }

        #[test]
        fn full_ranking_relabeling_maps_scores(seed in 0u64..500, n in 2usize..7) {
            use rand::prelude::*;
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            // Two full rankings; relabel item ids by a random permutation.
            let mut order1: Vec<ItemId> = (0..n).map(ItemId).collect();
            order1.shuffle(&mut rng);
            let mut order2 = order1.clone();
            order2.shuffle(&mut rng);
            let mut perm: Vec<usize> = (0..n).collect();
            perm.shuffle(&mut rng);

            let build = |orders: &[Vec<ItemId>]| {
                QueryInstance::new(
                    "q".into(),
                    (0..n).map(|i| format!("d{i}")).collect(),
                    orders
                        .iter()
                        .map(|o| PartialRanking::from_order(n, o).unwrap())
                        .collect(),
                    None,
                )
                .unwrap()
            };
            let q = build(&[order1.clone(), order2.clone()]);
            let relabel = |o: &[ItemId]| o.iter().map(|i| ItemId(perm[i.0])).collect::<Vec<_>>();
            let qp = build(&[relabel(&order1), relabel(&order2)]);

            let params = AggregateParams::<f64>::default();
            for method in [Method::Borda, Method::Rrf] {
                let a = aggregate_query(&q, method, &params);
                let b = aggregate_query(&qp, method, &params);
                for item in q.items() {
                    let x = a.score_of(item).unwrap();
                    let y = b.score_of(ItemId(perm[item.0])).unwrap();
                    prop_assert!((x - y).abs() <= 1e-12);
                }
            }
        }
    }
}
