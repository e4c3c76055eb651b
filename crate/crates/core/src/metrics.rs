//! Graded relevance metrics and run evaluation.
//!
//! All three metrics consume a best-first ranking of item ids plus per-item
//! integer grades. Positions are 1-based. NDCG uses exponential gain
//! `2^y - 1` with logarithmic discount `1 / log2(1 + pos)`; ERR is a cascade
//! with satisfaction probability `(2^y - 1) / 2^{y_max}` applied uniformly in
//! both the stop and the continuation factor; RBP discounts raw grades
//! geometrically with persistence `p`.

use std::fmt;

use crate::error::{Error, Result};
use crate::model::{AggregateRun, ItemId, QueryInstance};
use crate::scalar::{fl, fl_usize, Scalar};

/// Gain of a grade: `2^y - 1`.
pub fn gain<F: Scalar>(y: u32) -> F {
    fl::<F>(2.0).powi(y as i32) - F::one()
}

/// Rank discount at a 1-based position: `1 / log2(1 + pos)`.
pub fn discount<F: Scalar>(pos: usize) -> F {
    fl_usize::<F>(1 + pos).log2().recip()
}

/// Probability that a user is satisfied by a document of grade `y` in the
/// ERR cascade: `(2^y - 1) / 2^{y_max}`.
pub fn err_satisfaction<F: Scalar>(y: u32, y_max: u32) -> F {
    assert!(y <= y_max, "grade {y} exceeds y_max {y_max}");
    gain::<F>(y) / fl::<F>(2.0).powi(y_max as i32)
}

fn check_ranking(ranking: &[ItemId], labels: &[u32]) {
    assert_eq!(
        ranking.len(),
        labels.len(),
        "ranking must cover every labeled item exactly once"
    );
    let mut seen = vec![false; labels.len()];
    for item in ranking {
        assert!(item.0 < labels.len(), "item {item} out of label range");
        assert!(!seen[item.0], "item {item} appears twice in ranking");
        seen[item.0] = true;
    }
}

/// Ideal DCG at depth `k` (full depth when `k == 0` or `k >= n`).
pub fn dcg_max<F: Scalar>(labels: &[u32], k: usize) -> F {
    let n = labels.len();
    let depth = if k == 0 { n } else { k.min(n) };
    let mut sorted = labels.to_vec();
    sorted.sort_unstable_by(|a, b| b.cmp(a));
    sorted[..depth]
        .iter()
        .enumerate()
        .map(|(t, &y)| gain::<F>(y) * discount::<F>(t + 1))
        .sum()
}

/// NDCG at depth `k`; `k == 0` means full depth and `k > n` clamps to `n`.
///
/// A query whose labels are all zero has no ideal ordering to miss, so it
/// scores 1 by convention.
pub fn ndcg<F: Scalar>(ranking: &[ItemId], labels: &[u32], k: usize) -> F {
    check_ranking(ranking, labels);
    let n = labels.len();
    let depth = if k == 0 { n } else { k.min(n) };
    let ideal: F = dcg_max(labels, k);
    if ideal == F::zero() {
        return F::one();
    }
    let dcg: F = ranking[..depth]
        .iter()
        .enumerate()
        .map(|(t, item)| gain::<F>(labels[item.0]) * discount::<F>(t + 1))
        .sum();
    dcg / ideal
}

/// Expected reciprocal rank with maximum grade `y_max`, evaluated at full
/// depth.
pub fn err<F: Scalar>(ranking: &[ItemId], labels: &[u32], y_max: u32) -> F {
    check_ranking(ranking, labels);
    let mut total = F::zero();
    let mut continue_p = F::one();
    for (t, item) in ranking.iter().enumerate() {
        let r = err_satisfaction::<F>(labels[item.0], y_max);
        total = total + continue_p * r / fl_usize::<F>(t + 1);
        continue_p = continue_p * (F::one() - r);
    }
    total
}

/// Rank-biased precision with persistence `p`: `(1 - p) Σ y_pos p^{pos-1}`
/// over raw grades.
pub fn rbp<F: Scalar>(ranking: &[ItemId], labels: &[u32], p: F) -> F {
    check_ranking(ranking, labels);
    assert!(
        p > F::zero() && p < F::one(),
        "persistence must lie strictly inside (0, 1)"
    );
    let mut total = F::zero();
    let mut weight = F::one() - p;
    for item in ranking {
        total = total + fl_usize::<F>(labels[item.0] as usize) * weight;
        weight = weight * p;
    }
    total
}

/// A named metric with its parameters, parseable from CLI strings like
/// `ndcg@5`, `ndcg`, `err`, `rbp`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MetricSpec {
    /// NDCG at depth `k`; 0 means full depth.
    Ndcg { k: usize },
    /// ERR; the maximum grade comes from the evaluation call.
    Err,
    /// RBP; the persistence comes from the evaluation call.
    Rbp,
}

impl MetricSpec {
    pub fn parse(s: &str) -> Result<Self> {
        let s = s.trim();
        if s == "err" {
            return Ok(MetricSpec::Err);
        }
        if s == "rbp" {
            return Ok(MetricSpec::Rbp);
        }
        if s == "ndcg" {
            return Ok(MetricSpec::Ndcg { k: 0 });
        }
        if let Some(k) = s.strip_prefix("ndcg@") {
            let k: usize = k
                .parse()
                .map_err(|_| Error::data(format!("bad NDCG depth in metric {s:?}")))?;
            return Ok(MetricSpec::Ndcg { k });
        }
        Err(Error::data(format!(
            "unknown metric {s:?} (expected ndcg, ndcg@K, err, or rbp)"
        )))
    }

    /// Parses a comma-separated metric list.
    pub fn parse_list(s: &str) -> Result<Vec<Self>> {
        s.split(',')
            .filter(|part| !part.trim().is_empty())
            .map(Self::parse)
            .collect()
    }
}

impl fmt::Display for MetricSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MetricSpec::Ndcg { k: 0 } => write!(f, "ndcg"),
            MetricSpec::Ndcg { k } => write!(f, "ndcg@{k}"),
            MetricSpec::Err => write!(f, "err"),
            MetricSpec::Rbp => write!(f, "rbp"),
        }
    }
}

/// Parameters shared by every metric evaluation of a corpus.
#[derive(Clone, Copy, Debug)]
pub struct MetricParams<F> {
    /// RBP persistence.
    pub rbp_p: F,
    /// Maximum grade for ERR satisfaction probabilities.
    pub y_max: u32,
}

impl<F: Scalar> Default for MetricParams<F> {
    fn default() -> Self {
        MetricParams {
            rbp_p: fl(0.95),
            y_max: 2,
        }
    }
}

/// Evaluates one metric for one ranking.
pub fn evaluate_metric<F: Scalar>(
    spec: MetricSpec,
    ranking: &[ItemId],
    labels: &[u32],
    params: &MetricParams<F>,
) -> F {
    match spec {
        MetricSpec::Ndcg { k } => ndcg(ranking, labels, k),
        MetricSpec::Err => err(ranking, labels, params.y_max),
        MetricSpec::Rbp => rbp(ranking, labels, params.rbp_p),
    }
}

/// Per-query metric values plus their unweighted means.
#[derive(Clone, Debug)]
pub struct MetricTable<F> {
    pub specs: Vec<MetricSpec>,
    /// `(query_id, one value per spec)` in run order.
    pub rows: Vec<(String, Vec<F>)>,
    /// Unweighted mean per spec.
    pub means: Vec<F>,
}

impl<F: Scalar> MetricTable<F> {
    /// CSV rendering: a `qid,metric,value` row per query per metric, then an
    /// `ALL,<metric>,<mean>` summary row per metric. Metrics vary fastest.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("qid,metric,value\n");
        for (qid, values) in &self.rows {
            for (spec, v) in self.specs.iter().zip(values) {
                out.push_str(&format!("{qid},{spec},{v:.6}\n"));
            }
        }
        for (spec, mean) in self.specs.iter().zip(&self.means) {
            out.push_str(&format!("ALL,{spec},{mean:.6}\n"));
        }
        out
    }
}

/// Evaluates a run against its labeled instances.
///
/// Every query in the run must match an instance by `query_id`, rank exactly
/// the instance's items, and the instance must be labeled with grades no
/// larger than `params.y_max`.
pub fn evaluate_run<F: Scalar>(
    run: &AggregateRun<F>,
    instances: &[QueryInstance],
    specs: &[MetricSpec],
    params: &MetricParams<F>,
) -> Result<MetricTable<F>> {
    if specs.is_empty() {
        return Err(Error::data("no metrics requested"));
    }
    let by_id: std::collections::HashMap<&str, &QueryInstance> = instances
        .iter()
        .map(|q| (q.query_id.as_str(), q))
        .collect();

    let mut rows = Vec::with_capacity(run.queries.len());
    let mut sums = vec![F::zero(); specs.len()];
    for ranked in &run.queries {
        let q = by_id.get(ranked.query_id.as_str()).ok_or_else(|| {
            Error::data(format!(
                "run query {} not present in the dataset",
                ranked.query_id
            ))
        })?;
        let labels = q.labels_required()?;
        if let Some(&max) = labels.iter().max() {
            if max > params.y_max {
                return Err(Error::data(format!(
                    "query {}: grade {max} exceeds y_max {}",
                    q.query_id, params.y_max
                )));
            }
        }
        let order = ranked.order();
        if order.len() != q.n() {
            return Err(Error::data(format!(
                "run query {} ranks {} items, dataset has {}",
                q.query_id,
                order.len(),
                q.n()
            )));
        }
        let mut seen = vec![false; q.n()];
        for item in &order {
            if item.0 >= q.n() || seen[item.0] {
                return Err(Error::data(format!(
                    "run query {} does not rank the dataset's items exactly once",
                    q.query_id
                )));
            }
            seen[item.0] = true;
        }
        let values: Vec<F> = specs
            .iter()
            .map(|spec| evaluate_metric(*spec, &order, labels, params))
            .collect();
        for (s, v) in sums.iter_mut().zip(&values) {
            *s = *s + *v;
        }
        rows.push((ranked.query_id.clone(), values));
    }
    if rows.is_empty() {
        return Err(Error::data("run contains no queries"));
    }
    let count = fl_usize::<F>(rows.len());
    let means = sums.into_iter().map(|s| s / count).collect();
    Ok(MetricTable {
        specs: specs.to_vec(),
        rows,
        means,
    })
}
