//! Supervised training of linear scoring models on smoothed metrics.
//!
//! A model scores items as `s = <w, ψ(item)>`. Under Gaussian score noise of
//! width `sigma`, pairwise win probabilities are `Φ((s_i - s_j)/(σ√2))`, each
//! item's rank gets a normal approximation matched to the Poisson-binomial
//! moments (`μ = Σ p`, `v = Σ p(1-p)`) and discretized onto integer ranks,
//! and the training objective is the expectation of NDCG, ERR, or RBP under
//! those rank distributions. The objective is smooth in `w`, so plain
//! full-batch gradient ascent over a learning-rate × sigma grid applies; the
//! gradient is exact for the discretized objective (ERR's stop
//! probabilities, taken from the current score-sorted permutation, and the
//! ideal DCG are treated as constants).

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::features::{map_features, FeatureConfig};
use crate::metrics::{
    dcg_max, discount, err_satisfaction, evaluate_metric, gain, MetricParams, MetricSpec,
};
use crate::model::{
    AggregationModel, FeatureTable, ItemId, MappingKind, ObjectiveKind, QueryInstance,
    QueryRanking,
};
use crate::rankdist::{
    discretized_normal_pmf, opponents, pairwise_prob_sup, rank_distribution_dp, VARIANCE_FLOOR,
};
use crate::scalar::{fl, fl_usize, Scalar};

/// A training objective with its parameters.
#[derive(Clone, Copy, Debug)]
pub struct Objective<F> {
    pub kind: ObjectiveKind,
    /// RBP persistence; used by the RBP objective only.
    pub rbp_p: F,
    /// Largest grade the ERR satisfaction model allows.
    pub y_max: u32,
}

impl<F: Scalar> Objective<F> {
    pub fn new(kind: ObjectiveKind) -> Self {
        Objective {
            kind,
            rbp_p: fl(0.95),
            y_max: 2,
        }
    }

    /// Metric parameters matching this objective.
    pub fn metric_params(&self) -> MetricParams<F> {
        MetricParams {
            rbp_p: self.rbp_p,
            y_max: self.y_max,
        }
    }
}

/// Scores every item of a feature table: `scores[i] = <w, ψ_i>`.
pub fn score_items<F: Scalar>(features: &FeatureTable<F>, w: &[F]) -> Result<Vec<F>> {
    if features.dim() != w.len() {
        return Err(Error::DimensionMismatch {
            expected: features.dim(),
            got: w.len(),
        });
    }
    Ok(features
        .vectors
        .iter()
        .map(|row| row.iter().zip(w).map(|(&x, &wk)| x * wk).sum())
        .collect())
}

/// Per-item, per-rank payoff `c[item][rank]` such that the expected
/// objective is `Σ_j Σ_r c[j][r] P_j(r)`. `None` when the objective is
/// constant (all-zero labels under NDCG score 1 by convention).
fn payoff_table<F: Scalar>(
    labels: &[u32],
    scores: &[F],
    obj: &Objective<F>,
) -> Result<Option<Vec<Vec<F>>>> {
    let n = labels.len();
    match obj.kind {
        ObjectiveKind::ExpectedNdcg => {
            let ideal: F = dcg_max(labels, 0);
            if ideal == F::zero() {
                return Ok(None);
            }
            Ok(Some(
                (0..n)
                    .map(|j| {
                        let g = gain::<F>(labels[j]) / ideal;
                        (0..n).map(|r| g * discount::<F>(r + 1)).collect()
                    })
                    .collect(),
            ))
        }
        ObjectiveKind::ExpectedRbp => {
            if !(obj.rbp_p > F::zero() && obj.rbp_p < F::one()) {
                return Err(Error::data(format!(
                    "RBP persistence must lie in (0, 1), got {}",
                    obj.rbp_p
                )));
            }
            let head = F::one() - obj.rbp_p;
            Ok(Some(
                (0..n)
                    .map(|j| {
                        let y = fl_usize::<F>(labels[j] as usize);
                        let mut weight = head;
                        (0..n)
                            .map(|_| {
                                let c = y * weight;
                                weight = weight * obj.rbp_p;
                                c
                            })
                            .collect()
                    })
                    .collect(),
            ))
        }
        ObjectiveKind::ExpectedErr => {
            if let Some(&max) = labels.iter().max() {
                if max > obj.y_max {
                    return Err(Error::data(format!(
                        "grade {max} exceeds objective y_max {}",
                        obj.y_max
                    )));
                }
            }
            // Stop probabilities come from the score-sorted reference
            // permutation; they are constants of the current evaluation.
            let reference: Vec<ItemId> = crate::model::rank_by_scores(scores)
                .into_iter()
                .map(|(item, _)| item)
                .collect();
            let sat: Vec<F> = labels
                .iter()
                .map(|&y| err_satisfaction::<F>(y, obj.y_max))
                .collect();
            let table = (0..n)
                .map(|j| {
                    // Probability the user is still unsatisfied after the
                    // first r items of the reference list with j removed.
                    let mut row = Vec::with_capacity(n);
                    let mut carry = F::one();
                    let mut r = 0usize;
                    row.push(sat[j]); // rank 0: no earlier items.
                    for &other in reference.iter() {
                        if other.0 == j {
                            continue;
                        }
                        carry = carry * (F::one() - sat[other.0]);
                        r += 1;
                        if r >= n {
                            break;
                        }
                        row.push(sat[j] * carry / fl_usize::<F>(r + 1));
                    }
                    debug_assert_eq!(row.len(), n);
                    row
                })
                .collect();
            Ok(Some(table))
        }
    }
}

/// Rank-distribution context of one evaluation: pairwise probabilities and
/// per-item discretized normal approximations.
struct RankContext<F> {
    /// `p[i][j]` = probability item `i` beats item `j`; diagonal unused.
    p: Vec<Vec<F>>,
    mu: Vec<F>,
    var: Vec<F>,
    /// Discretized rank PMFs over `0..n-1`.
    pmf: Vec<Vec<F>>,
}

fn rank_context<F: Scalar>(scores: &[F], sigma: F) -> RankContext<F> {
    let n = scores.len();
    let mut p = vec![vec![F::zero(); n]; n];
    for i in 0..n {
        for j in 0..n {
            if i != j {
                p[i][j] = pairwise_prob_sup(scores, sigma, ItemId(i), ItemId(j));
            }
        }
    }
    let mut mu = vec![F::zero(); n];
    let mut var = vec![F::zero(); n];
    for j in 0..n {
        for i in 0..n {
            if i != j {
                mu[j] = mu[j] + p[i][j];
                var[j] = var[j] + p[i][j] * (F::one() - p[i][j]);
            }
        }
    }
    let pmf = (0..n)
        .map(|j| discretized_normal_pmf(mu[j], var[j], n))
        .collect();
    RankContext { p, mu, var, pmf }
}

/// Expected objective of one query under the normal rank approximation.
///
/// Requires labels and finite scores; `sigma` must be positive.
pub fn expected_objective<F: Scalar>(
    q: &QueryInstance,
    scores: &[F],
    sigma: F,
    obj: &Objective<F>,
) -> Result<F> {
    let labels = q.labels_required()?;
    if scores.len() != q.n() {
        return Err(Error::DimensionMismatch {
            expected: q.n(),
            got: scores.len(),
        });
    }
    let payoff = match payoff_table(labels, scores, obj)? {
        Some(t) => t,
        None => return Ok(F::one()),
    };
    let ctx = rank_context(scores, sigma);
    let mut total = F::zero();
    for j in 0..q.n() {
        for (r, &mass) in ctx.pmf[j].iter().enumerate() {
            total = total + payoff[j][r] * mass;
        }
    }
    Ok(total)
}

/// Diagnostic twin of [`expected_objective`] that uses the exact
/// Poisson-binomial rank distributions instead of the normal approximation.
/// Quadratically more expensive; not used by training itself.
pub fn expected_objective_exact<F: Scalar>(
    q: &QueryInstance,
    scores: &[F],
    sigma: F,
    obj: &Objective<F>,
) -> Result<F> {
    let labels = q.labels_required()?;
    let payoff = match payoff_table(labels, scores, obj)? {
        Some(t) => t,
        None => return Ok(F::one()),
    };
    let n = q.n();
    let prob = |i, j| pairwise_prob_sup(scores, sigma, i, j);
    let mut total = F::zero();
    for j in 0..n {
        let dist = rank_distribution_dp(&prob, ItemId(j), &opponents(n, ItemId(j)));
        for (r, &mass) in dist.mass().iter().enumerate() {
            total = total + payoff[j][r] * mass;
        }
    }
    Ok(total)
}

/// Expected objective and its exact gradient with respect to `w`.
///
/// The chain rule runs through the discretized, renormalized PMFs, the rank
/// moments, and the Gaussian pairwise probabilities. The derivative of the
/// variance clamp is zero below the floor.
pub fn objective_and_gradient<F: Scalar>(
    q: &QueryInstance,
    features: &FeatureTable<F>,
    w: &[F],
    sigma: F,
    obj: &Objective<F>,
) -> Result<(F, Vec<F>)> {
    let labels = q.labels_required()?;
    if features.len() != q.n() {
        return Err(Error::DimensionMismatch {
            expected: q.n(),
            got: features.len(),
        });
    }
    let scores = score_items(features, w)?;
    let d = w.len();
    let n = q.n();

    let payoff = match payoff_table(labels, &scores, obj)? {
        Some(t) => t,
        None => return Ok((F::one(), vec![F::zero(); d])),
    };
    let ctx = rank_context(&scores, sigma);
    let floor = fl::<F>(VARIANCE_FLOOR);

    // Objective plus per-item sensitivities to the rank moments.
    let mut total = F::zero();
    let mut alpha_mu = vec![F::zero(); n];
    let mut alpha_var = vec![F::zero(); n];
    for j in 0..n {
        let veff = ctx.var[j].max(floor);
        let pmf = &ctx.pmf[j];
        // Moments of (r - μ) under the discretized PMF; renormalization
        // makes the PMF derivative `P_r ((r-μ) - E[(r-μ)]) / v` and
        // `P_r ((r-μ)^2 - E[(r-μ)^2]) / (2 v^2)`.
        let mut d1 = F::zero();
        let mut d2 = F::zero();
        let mut oj = F::zero();
        let mut c1 = F::zero();
        let mut c2 = F::zero();
        for (r, &mass) in pmf.iter().enumerate() {
            let dev = fl_usize::<F>(r) - ctx.mu[j];
            d1 = d1 + mass * dev;
            d2 = d2 + mass * dev * dev;
            let c = payoff[j][r];
            oj = oj + c * mass;
            c1 = c1 + c * mass * dev;
            c2 = c2 + c * mass * dev * dev;
        }
        total = total + oj;
        alpha_mu[j] = (c1 - oj * d1) / veff;
        alpha_var[j] = if ctx.var[j] > floor {
            (c2 - oj * d2) / (fl::<F>(2.0) * veff * veff)
        } else {
            F::zero()
        };
    }

    // Push the sensitivities to the scores. With g_kj symmetric,
    // ds_k = Σ_{j≠k} g_kj [αμ_j + αv_j (1-2 p_kj) - αμ_k - αv_k (1-2 p_jk)].
    let denom = sigma * F::SQRT_2();
    let mut ds = vec![F::zero(); n];
    for k in 0..n {
        let mut acc = F::zero();
        for j in 0..n {
            if j == k {
                continue;
            }
            let z = (scores[k] - scores[j]) / denom;
            let gkj = z.norm_pdf() / denom;
            let one = F::one();
            let two = fl::<F>(2.0);
            let term = alpha_mu[j] + alpha_var[j] * (one - two * ctx.p[k][j])
                - alpha_mu[k]
                - alpha_var[k] * (one - two * ctx.p[j][k]);
            acc = acc + gkj * term;
        }
        ds[k] = acc;
    }

    // Pull back to the weights: grad = Σ_k ds_k ψ_k.
    let mut grad = vec![F::zero(); d];
    for k in 0..n {
        let row = features.row(ItemId(k));
        for (gslot, &x) in grad.iter_mut().zip(row) {
            *gslot = *gslot + ds[k] * x;
        }
    }
    Ok((total, grad))
}

/// Gradient of the expected objective with respect to `w`.
pub fn objective_gradient<F: Scalar>(
    q: &QueryInstance,
    features: &FeatureTable<F>,
    w: &[F],
    sigma: F,
    obj: &Objective<F>,
) -> Result<Vec<F>> {
    objective_and_gradient(q, features, w, sigma, obj).map(|(_, g)| g)
}

/// Training configuration: objective, feature mapping, and the search grid.
#[derive(Clone, Debug)]
pub struct TrainConfig<F> {
    pub objective: Objective<F>,
    pub mapping_kind: MappingKind,
    /// Factor rank of the SVD/CP mappings.
    pub factor_rank: usize,
    /// Learning rates to try.
    pub lr_grid: Vec<F>,
    /// Score noise widths to try.
    pub sigma_grid: Vec<F>,
    /// Gradient ascent steps per grid point.
    pub max_iterations: usize,
    /// Seed for feature computation (CP initialization).
    pub seed: u64,
    /// Metric that selects the winning grid point on the validation set.
    pub valid_metric: MetricSpec,
}

impl<F: Scalar> TrainConfig<F> {
    pub fn new(kind: ObjectiveKind, mapping: MappingKind) -> Self {
        TrainConfig {
            objective: Objective::new(kind),
            mapping_kind: mapping,
            factor_rank: 5,
            lr_grid: default_lr_grid(),
            sigma_grid: default_sigma_grid(),
            max_iterations: 500,
            seed: 1,
            valid_metric: MetricSpec::Ndcg { k: 10 },
        }
    }
}

/// Default learning-rate grid `10^-1 .. 10^-6`.
pub fn default_lr_grid<F: Scalar>() -> Vec<F> {
    (1..=6).map(|e| fl(10f64.powi(-e))).collect()
}

/// Default sigma grid `10^-1 .. 10^-4`.
pub fn default_sigma_grid<F: Scalar>() -> Vec<F> {
    (1..=4).map(|e| fl(10f64.powi(-e))).collect()
}

/// One row of the training log.
#[derive(Clone, Debug)]
pub struct TrainLogRow<F> {
    pub lr: F,
    pub sigma: F,
    /// 0 is the untrained state; row `t` describes the weights after `t`
    /// ascent steps.
    pub iteration: usize,
    pub train_objective: F,
    pub valid_metric: F,
}

/// Full training log across the grid.
#[derive(Clone, Debug)]
pub struct TrainLog<F> {
    pub rows: Vec<TrainLogRow<F>>,
}

impl<F> Default for TrainLog<F> {
    fn default() -> Self {
        TrainLog { rows: Vec::new() }
    }
}

impl<F: Scalar> TrainLog<F> {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("grid_lr,grid_sigma,iteration,train_objective,valid_metric\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                r.lr, r.sigma, r.iteration, r.train_objective, r.valid_metric
            ));
        }
        out
    }

    /// Rows of the grid point that produced the returned model.
    pub fn rows_for(&self, lr: F, sigma: F) -> Vec<&TrainLogRow<F>> {
        self.rows
            .iter()
            .filter(|r| r.lr == lr && r.sigma == sigma)
            .collect()
    }
}

/// Result of [`fit`]: the selected model and the full log.
#[derive(Clone, Debug)]
pub struct TrainOutcome<F> {
    pub model: AggregationModel<F>,
    pub log: TrainLog<F>,
    /// Validation metric of the selected grid point's final weights.
    pub best_valid: F,
    /// Learning rate of the selected grid point (its sigma is on the model).
    pub best_lr: F,
}

fn feature_tables<F: Scalar>(
    instances: &[QueryInstance],
    config: &FeatureConfig,
) -> Result<Vec<FeatureTable<F>>> {
    let tables: Result<Vec<FeatureTable<F>>> = instances
        .par_iter()
        .map(|q| map_features(q, config))
        .collect();
    let tables = tables?;
    if let Some(first) = tables.first() {
        for t in &tables {
            if t.dim() != first.dim() {
                return Err(Error::data(format!(
                    "feature dimension varies across queries ({} vs {}); \
                     every query must have the same number of ranking inputs",
                    first.dim(),
                    t.dim()
                )));
            }
        }
    }
    Ok(tables)
}

fn mean_valid_metric<F: Scalar>(
    valid: &[QueryInstance],
    tables: &[FeatureTable<F>],
    w: &[F],
    spec: MetricSpec,
    params: &MetricParams<F>,
) -> Result<F> {
    let mut sum = F::zero();
    for (q, t) in valid.iter().zip(tables) {
        let scores = score_items(t, w)?;
        let ranking = QueryRanking::from_scores(q, &scores);
        sum = sum + evaluate_metric(spec, &ranking.order(), q.labels_required()?, params);
    }
    Ok(sum / fl_usize::<F>(valid.len()))
}

/// Trains a linear model by full-batch gradient ascent from `w = 0` at every
/// grid point and returns the weights with the best final validation metric
/// (ties break toward the earlier grid point).
///
/// The whole procedure is deterministic for a fixed config: features are
/// computed once per instance from the config seed, per-query gradients are
/// reduced in query order, and grid points run in a fixed order. A grid
/// point whose objective or weights turn non-finite is abandoned (its log
/// rows up to that point remain) and never selected; training fails only
/// when every grid point is abandoned.
pub fn fit<F: Scalar>(
    train_set: &[QueryInstance],
    valid_set: &[QueryInstance],
    config: &TrainConfig<F>,
) -> Result<TrainOutcome<F>> {
    if train_set.is_empty() {
        return Err(Error::data("training set is empty"));
    }
    if valid_set.is_empty() {
        return Err(Error::data("validation set is empty"));
    }
    if config.lr_grid.is_empty() || config.sigma_grid.is_empty() {
        return Err(Error::data("learning-rate and sigma grids must be non-empty"));
    }
    for q in train_set.iter().chain(valid_set) {
        q.labels_required()?;
    }

    let feat_config = FeatureConfig::new(config.mapping_kind, config.factor_rank, config.seed);
    let train_tables: Vec<FeatureTable<F>> = feature_tables(train_set, &feat_config)?;
    let valid_tables: Vec<FeatureTable<F>> = feature_tables(valid_set, &feat_config)?;
    let d = train_tables[0].dim();
    if valid_tables[0].dim() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: valid_tables[0].dim(),
        });
    }
    let metric_params = config.objective.metric_params();

    let mut log = TrainLog::default();
    let mut best: Option<(F, Vec<F>, F, F)> = None; // (valid metric, weights, sigma, lr)

    for &lr in &config.lr_grid {
        if !(lr.is_finite() && lr > F::zero()) {
            return Err(Error::data(format!("learning rate must be positive, got {lr}")));
        }
        for &sigma in &config.sigma_grid {
            if !(sigma.is_finite() && sigma > F::zero()) {
                return Err(Error::data(format!("sigma must be positive, got {sigma}")));
            }
            let mut w = vec![F::zero(); d];
            let mut healthy = true;
            for iteration in 0..=config.max_iterations {
                // Batch objective and gradient, reduced in query order.
                let evals: Result<Vec<(F, Vec<F>)>> = train_set
                    .par_iter()
                    .zip(&train_tables)
                    .map(|(q, t)| objective_and_gradient(q, t, &w, sigma, &config.objective))
                    .collect();
                let evals = evals?;
                let count = fl_usize::<F>(train_set.len());
                let mut objective = F::zero();
                let mut grad = vec![F::zero(); d];
                for (o, g) in &evals {
                    objective = objective + *o;
                    for (slot, &gi) in grad.iter_mut().zip(g) {
                        *slot = *slot + gi;
                    }
                }
                objective = objective / count;
                if !objective.is_finite() {
                    healthy = false;
                    break;
                }
                log.rows.push(TrainLogRow {
                    lr,
                    sigma,
                    iteration,
                    train_objective: objective,
                    valid_metric: mean_valid_metric(
                        valid_set,
                        &valid_tables,
                        &w,
                        config.valid_metric,
                        &metric_params,
                    )?,
                });
                if iteration == config.max_iterations {
                    break;
                }
                for (wk, &gk) in w.iter_mut().zip(&grad) {
                    *wk = *wk + lr * gk / count;
                }
                if w.iter().any(|wk| !wk.is_finite()) {
                    healthy = false;
                    break;
                }
            }
            if !healthy {
                continue;
            }
            let valid = mean_valid_metric(
                valid_set,
                &valid_tables,
                &w,
                config.valid_metric,
                &metric_params,
            )?;
            let better = match &best {
                None => true,
                Some((b, _, _, _)) => valid > *b,
            };
            if better {
                best = Some((valid, w, sigma, lr));
            }
        }
    }

    let (best_valid, weights, sigma, best_lr) =
        best.ok_or_else(|| Error::data("training diverged at every grid point"))?;
    let model = AggregationModel {
        weights,
        sigma,
        mapping_kind: config.mapping_kind,
        factor_rank: if config.mapping_kind.uses_rank() {
            config.factor_rank
        } else {
            0
        },
        objective_kind: config.objective.kind,
        rbp_p: config.objective.rbp_p,
        y_max: config.objective.y_max,
        seed: config.seed,
    };
    Ok(TrainOutcome {
        model,
        log,
        best_valid,
        best_lr,
    })
}

/// Applies a trained model to one query: recomputes features under the
/// model's mapping (kind, rank, seed), scores, and ranks with the shared
/// tie-break. A zero model yields all-equal scores, i.e. item-id order.
pub fn predict<F: Scalar>(
    model: &AggregationModel<F>,
    q: &QueryInstance,
) -> Result<QueryRanking<F>> {
    model.validate()?;
    let config = FeatureConfig::new(model.mapping_kind, model.factor_rank, model.seed);
    let features: FeatureTable<F> = map_features(q, &config)?;
    let scores = score_items(&features, &model.weights)?;
    Ok(QueryRanking::from_scores(q, &scores))
}
