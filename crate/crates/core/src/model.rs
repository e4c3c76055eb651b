//! Domain types shared by every other module.
//!
//! A query holds `n` items identified by dense [`ItemId`]s `0..n-1` and `m`
//! partial rankings of those items. Positions are 1-based and contiguous
//! within the subset an input actually ranks; absence is a first-class state,
//! not position 0 or infinity. All downstream code (aggregators, metrics,
//! features, training) works against these types.

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{fl, fl_usize, Scalar};

/// Dense item identifier within one query, `0..n-1` after ingestion.
///
/// Ties anywhere in the crate break toward the smaller `ItemId`.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ItemId(pub usize);

impl fmt::Debug for ItemId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ItemId({})", self.0)
    }
}

impl fmt::Display for ItemId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// One ranking input over a query's items: a 1-based position for each item
/// it ranks, absence for the rest.
///
/// Invariant: the positions present are exactly `{1, …, k}` where `k` is the
/// number of ranked items. Constructed through [`PartialRanking::new`], which
/// enforces that.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PartialRanking {
    /// `positions[i]` is the position of item `i`, or `None` if absent.
    positions: Vec<Option<u32>>,
}

impl PartialRanking {
    /// Builds a ranking from per-item positions.
    ///
    /// Errors if a position repeats or the present positions are not exactly
    /// the contiguous block `1..=k`.
    pub fn new(positions: Vec<Option<u32>>) -> Result<Self> {
        let mut present: Vec<u32> = positions.iter().filter_map(|p| *p).collect();
        present.sort_unstable();
        for (rank0, pos) in present.iter().enumerate() {
            let expected = rank0 as u32 + 1;
            if *pos != expected {
                return Err(Error::data(format!(
                    "ranking positions must be exactly 1..=k, found {pos} where {expected} was expected"
                )));
            }
        }
        Ok(PartialRanking { positions })
    }

    /// Full ranking over `n` items: item `order[t]` gets position `t + 1`.
    pub fn from_order(n: usize, order: &[ItemId]) -> Result<Self> {
        let mut positions = vec![None; n];
        for (t, item) in order.iter().enumerate() {
            if item.0 >= n {
                return Err(Error::data(format!("item {item} out of range for n={n}")));
            }
            if positions[item.0].is_some() {
                return Err(Error::data(format!("item {item} listed twice")));
            }
            positions[item.0] = Some(t as u32 + 1);
        }
        Ok(PartialRanking { positions })
    }

    /// Number of items in the query (present or not).
    pub fn item_count(&self) -> usize {
        self.positions.len()
    }

    /// Number of items this input ranks.
    pub fn present_count(&self) -> usize {
        self.positions.iter().filter(|p| p.is_some()).count()
    }

    /// Position of `item` within this input, or `None` when absent.
    pub fn position(&self, item: ItemId) -> Option<u32> {
        self.positions[item.0]
    }

    /// Whether this input ranks `item`.
    pub fn contains(&self, item: ItemId) -> bool {
        self.positions[item.0].is_some()
    }

    /// Ranked items with their positions, in item-id order.
    pub fn present_items(&self) -> impl Iterator<Item = (ItemId, u32)> + '_ {
        self.positions
            .iter()
            .enumerate()
            .filter_map(|(i, p)| p.map(|pos| (ItemId(i), pos)))
    }

    /// Ranked items best-first.
    pub fn items_by_position(&self) -> Vec<ItemId> {
        let mut ranked: Vec<(u32, ItemId)> = self
            .present_items()
            .map(|(item, pos)| (pos, item))
            .collect();
        ranked.sort_unstable();
        ranked.into_iter().map(|(_, item)| item).collect()
    }
}

/// One query: `n` named items, `m` ranking inputs, optional graded labels.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct QueryInstance {
    /// External query key, preserved verbatim from the data source.
    pub query_id: String,
    /// External document names, indexed by `ItemId`.
    pub doc_names: Vec<String>,
    /// The `m` ranking inputs, each over all `n` items.
    pub inputs: Vec<PartialRanking>,
    /// Relevance grades indexed by `ItemId`; `None` for unlabeled data.
    pub labels: Option<Vec<u32>>,
}

impl QueryInstance {
    /// Validating constructor: `n >= 1`, `m >= 1`, consistent lengths,
    /// unique document names.
    pub fn new(
        query_id: String,
        doc_names: Vec<String>,
        inputs: Vec<PartialRanking>,
        labels: Option<Vec<u32>>,
    ) -> Result<Self> {
        let n = doc_names.len();
        if n == 0 {
            return Err(Error::data(format!("query {query_id}: no items")));
        }
        if inputs.is_empty() {
            return Err(Error::data(format!("query {query_id}: no ranking inputs")));
        }
        for (i, input) in inputs.iter().enumerate() {
            if input.item_count() != n {
                return Err(Error::data(format!(
                    "query {query_id}: input {} covers {} items, query has {n}",
                    i + 1,
                    input.item_count()
                )));
            }
        }
        if let Some(ref l) = labels {
            if l.len() != n {
                return Err(Error::data(format!(
                    "query {query_id}: {} labels for {n} items",
                    l.len()
                )));
            }
        }
        let mut seen = HashMap::new();
        for (i, name) in doc_names.iter().enumerate() {
            if let Some(first) = seen.insert(name.clone(), i) {
                return Err(Error::data(format!(
                    "query {query_id}: duplicate document {name:?} (items {first} and {i})"
                )));
            }
        }
        Ok(QueryInstance {
            query_id,
            doc_names,
            inputs,
            labels,
        })
    }

    /// Number of items.
    pub fn n(&self) -> usize {
        self.doc_names.len()
    }

    /// Number of ranking inputs.
    pub fn m(&self) -> usize {
        self.inputs.len()
    }

    /// All item ids of this query.
    pub fn items(&self) -> impl Iterator<Item = ItemId> {
        (0..self.n()).map(ItemId)
    }

    /// Labels, or an error naming the query when it is unlabeled.
    pub fn labels_required(&self) -> Result<&[u32]> {
        self.labels.as_deref().ok_or_else(|| {
            Error::data(format!(
                "query {}: operation requires labels, data is unlabeled (grade -1)",
                self.query_id
            ))
        })
    }
}

/// Raw per-document row as it appears in an external source, before item ids
/// are assigned. Positions may be arbitrary distinct integers per input.
#[derive(Clone, Debug)]
pub struct RawDocRow {
    pub doc_name: String,
    /// Grade `>= 0`, or `-1` for unlabeled.
    pub grade: i64,
    /// One entry per ranking input; `None` when the input omits the document.
    pub positions: Vec<Option<u32>>,
}

/// Raw query block: rows in source order.
#[derive(Clone, Debug)]
pub struct RawQuery {
    pub query_id: String,
    pub rows: Vec<RawDocRow>,
}

/// Assigns dense item ids in row order and compacts each input's raw
/// positions to `1..=k`, preserving their relative order.
///
/// Raw positions need not be contiguous: an input ranking documents A and C
/// at raw positions 3 and 7 comes out as positions 1 and 2. Errors on
/// duplicate document names, inconsistent input counts, duplicate positions
/// within one input, grades below `-1`, or labeled and unlabeled rows mixed
/// in one query.
pub fn reindex(raw: &RawQuery) -> Result<QueryInstance> {
    let qid = &raw.query_id;
    let n = raw.rows.len();
    if n == 0 {
        return Err(Error::data(format!("query {qid}: no documents")));
    }
    let m = raw.rows[0].positions.len();
    for row in &raw.rows {
        if row.positions.len() != m {
            return Err(Error::data(format!(
                "query {qid}: document {:?} has {} input columns, expected {m}",
                row.doc_name,
                row.positions.len()
            )));
        }
    }
    if m == 0 {
        return Err(Error::data(format!("query {qid}: no ranking inputs")));
    }

    let doc_names: Vec<String> = raw.rows.iter().map(|r| r.doc_name.clone()).collect();

    let mut inputs = Vec::with_capacity(m);
    for input_idx in 0..m {
        // Collect (raw position, item) pairs, then compact by sorted raw
        // position. Raw positions must be distinct within one input.
        let mut ranked: Vec<(u32, usize)> = Vec::new();
        for (item, row) in raw.rows.iter().enumerate() {
            if let Some(pos) = row.positions[input_idx] {
                ranked.push((pos, item));
            }
        }
        ranked.sort_unstable();
        for w in ranked.windows(2) {
            if w[0].0 == w[1].0 {
                return Err(Error::data(format!(
                    "query {qid}: input {} ranks documents {:?} and {:?} at the same position {}",
                    input_idx + 1,
                    doc_names[w[0].1],
                    doc_names[w[1].1],
                    w[0].0
                )));
            }
        }
        let mut positions = vec![None; n];
        for (compact0, (_, item)) in ranked.iter().enumerate() {
            positions[*item] = Some(compact0 as u32 + 1);
        }
        inputs.push(PartialRanking::new(positions)?);
    }

    let mut labels = Vec::with_capacity(n);
    let mut labeled = 0usize;
    for row in &raw.rows {
        if row.grade < -1 {
            return Err(Error::data(format!(
                "query {qid}: document {:?} has invalid grade {}",
                row.doc_name, row.grade
            )));
        }
        if row.grade >= 0 {
            labeled += 1;
        }
        labels.push(row.grade.max(0) as u32);
    }
    let labels = if labeled == 0 {
        None
    } else if labeled == n {
        Some(labels)
    } else {
        return Err(Error::data(format!(
            "query {qid}: mixes labeled and unlabeled documents"
        )));
    };

    QueryInstance::new(qid.clone(), doc_names, inputs, labels)
}

/// Probability distribution of one item's rank; rank 0 is best.
///
/// Invariant: entries lie in `[0, 1]` and sum to 1 within `1e-9`.
#[derive(Clone, Debug, PartialEq)]
pub struct RankDistribution<F> {
    mass: Vec<F>,
}

impl<F: Scalar> RankDistribution<F> {
    /// Wraps a probability mass vector, validating it.
    pub fn new(mass: Vec<F>) -> Result<Self> {
        if mass.is_empty() {
            return Err(Error::data("rank distribution over zero ranks"));
        }
        let slack = fl::<F>(1e-12);
        let mut sum = F::zero();
        for (r, &p) in mass.iter().enumerate() {
            if !(p >= -slack && p <= F::one() + slack) {
                return Err(Error::data(format!(
                    "rank distribution mass at rank {r} outside [0, 1]: {p}"
                )));
            }
            sum = sum + p;
        }
        if (sum - F::one()).abs() > fl::<F>(1e-9) {
            return Err(Error::data(format!(
                "rank distribution mass sums to {sum}, not 1"
            )));
        }
        Ok(RankDistribution { mass })
    }

    /// Probability of each rank `0..n-1`.
    pub fn mass(&self) -> &[F] {
        &self.mass
    }

    /// Number of ranks covered.
    pub fn len(&self) -> usize {
        self.mass.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mass.is_empty()
    }

    /// Expected rank.
    pub fn mean(&self) -> F {
        self.mass
            .iter()
            .enumerate()
            .map(|(r, &p)| fl_usize::<F>(r) * p)
            .sum()
    }
}

/// Orders items by descending score, breaking ties toward the smaller
/// `ItemId`.
///
/// Panics if any score is not finite; aggregators and models only produce
/// finite scores.
pub fn rank_by_scores<F: Scalar>(scores: &[F]) -> Vec<(ItemId, F)> {
    for (i, s) in scores.iter().enumerate() {
        assert!(s.is_finite(), "non-finite score {s} for item {i}");
    }
    let mut ranked: Vec<(ItemId, F)> = scores
        .iter()
        .enumerate()
        .map(|(i, &s)| (ItemId(i), s))
        .collect();
    ranked.sort_by(|a, b| {
        b.1.partial_cmp(&a.1)
            .expect("finite scores compare")
            .then(a.0.cmp(&b.0))
    });
    ranked
}

/// Consensus ranking of one query, best-first, with the score that produced
/// each position and the document name for serialization.
#[derive(Clone, Debug, PartialEq)]
pub struct QueryRanking<F> {
    pub query_id: String,
    /// `(item, document name, score)` in rank order; length equals the
    /// query's `n`.
    pub items: Vec<(ItemId, String, F)>,
}

impl<F: Scalar> QueryRanking<F> {
    /// Builds the ranking for `q` from per-item scores via the shared
    /// tie-break rule.
    pub fn from_scores(q: &QueryInstance, scores: &[F]) -> Self {
        assert_eq!(scores.len(), q.n(), "one score per item");
        let items = rank_by_scores(scores)
            .into_iter()
            .map(|(item, s)| (item, q.doc_names[item.0].clone(), s))
            .collect();
        QueryRanking {
            query_id: q.query_id.clone(),
            items,
        }
    }

    /// Item ids best-first.
    pub fn order(&self) -> Vec<ItemId> {
        self.items.iter().map(|(item, _, _)| *item).collect()
    }

    /// Document names best-first.
    pub fn doc_order(&self) -> Vec<&str> {
        self.items.iter().map(|(_, doc, _)| doc.as_str()).collect()
    }

    /// Score assigned to `item`.
    pub fn score_of(&self, item: ItemId) -> Option<F> {
        self.items
            .iter()
            .find(|(i, _, _)| *i == item)
            .map(|(_, _, s)| *s)
    }
}

/// Aggregated run: one consensus ranking per query, in query order.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct AggregateRun<F> {
    pub queries: Vec<QueryRanking<F>>,
}

impl<F: Scalar> AggregateRun<F> {
    pub fn new(queries: Vec<QueryRanking<F>>) -> Self {
        AggregateRun { queries }
    }
}

/// Which feature mapping produced a table or model.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum MappingKind {
    /// Per-input normalized Borda features, dimension `m`.
    #[serde(rename = "BF")]
    BordaFeatures,
    /// Per-input truncated SVD factors, dimension `3 * p * m`.
    #[serde(rename = "MF")]
    MatrixFactors,
    /// CP tensor factors of the stacked preference tensor, dimension `2 * p`.
    #[serde(rename = "TF")]
    TensorFactors,
}

impl MappingKind {
    /// Feature dimension for a query with `m` inputs under factor rank `p`.
    pub fn dim(self, m: usize, p: usize) -> usize {
        match self {
            MappingKind::BordaFeatures => m,
            MappingKind::MatrixFactors => 3 * p * m,
            MappingKind::TensorFactors => 2 * p,
        }
    }

    /// Whether the mapping uses the factor rank at all.
    pub fn uses_rank(self) -> bool {
        !matches!(self, MappingKind::BordaFeatures)
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "bf" | "BF" => Ok(MappingKind::BordaFeatures),
            "mf" | "MF" => Ok(MappingKind::MatrixFactors),
            "tf" | "TF" => Ok(MappingKind::TensorFactors),
            other => Err(Error::data(format!(
                "unknown feature mapping {other:?} (expected bf, mf, or tf)"
            ))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            MappingKind::BordaFeatures => "BF",
            MappingKind::MatrixFactors => "MF",
            MappingKind::TensorFactors => "TF",
        }
    }
}

/// Per-item feature vectors of one query.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureTable<F> {
    pub kind: MappingKind,
    /// Factor rank used by SVD/CP mappings; 0 for Borda features.
    pub factor_rank: usize,
    /// `vectors[item]` has the mapping's dimension `d`.
    pub vectors: Vec<Vec<F>>,
}

impl<F: Scalar> FeatureTable<F> {
    /// Feature dimension `d`.
    pub fn dim(&self) -> usize {
        self.vectors.first().map_or(0, Vec::len)
    }

    /// Number of items.
    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    /// Feature vector of `item`.
    pub fn row(&self, item: ItemId) -> &[F] {
        &self.vectors[item.0]
    }
}

/// Objective a model was trained for.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ObjectiveKind {
    /// Expected NDCG under the rank distributions.
    #[serde(rename = "NDCG_s")]
    ExpectedNdcg,
    /// Expected ERR under the rank distributions.
    #[serde(rename = "ERR_s")]
    ExpectedErr,
    /// Expected RBP under the rank distributions.
    #[serde(rename = "RBP_s")]
    ExpectedRbp,
}

impl ObjectiveKind {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "ndcg" => Ok(ObjectiveKind::ExpectedNdcg),
            "err" => Ok(ObjectiveKind::ExpectedErr),
            "rbp" => Ok(ObjectiveKind::ExpectedRbp),
            other => Err(Error::data(format!(
                "unknown objective {other:?} (expected ndcg, err, or rbp)"
            ))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ObjectiveKind::ExpectedNdcg => "NDCG_s",
            ObjectiveKind::ExpectedErr => "ERR_s",
            ObjectiveKind::ExpectedRbp => "RBP_s",
        }
    }
}

/// Linear scoring model over a feature mapping, with everything needed to
/// reproduce its features and objective at prediction time.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AggregationModel<F> {
    /// Weight vector; its length must match the mapping's dimension.
    pub weights: Vec<F>,
    /// Score noise level used by the smoothed objective.
    pub sigma: F,
    pub mapping_kind: MappingKind,
    /// Factor rank of the mapping; 0 for Borda features.
    pub factor_rank: usize,
    pub objective_kind: ObjectiveKind,
    /// RBP persistence parameter the model was trained with.
    pub rbp_p: F,
    /// Largest relevance grade the objective assumed.
    pub y_max: u32,
    /// Seed for the CP initialization so tensor features are reproducible at
    /// prediction time. Absent in hand-written files defaults to 0.
    #[serde(default)]
    pub seed: u64,
}

impl<F: Scalar> AggregationModel<F> {
    /// Structural validation: finite reals, weight dimension compatible with
    /// the mapping kind.
    ///
    /// The exact dimension `d` of BF and MF mappings depends on the number of
    /// ranking inputs `m`, which a model file does not carry; what can be
    /// checked here is `d >= 1`, divisibility by `3p` for MF, and `d == 2p`
    /// for TF. A surviving mismatch against a concrete dataset surfaces as a
    /// dimension error at prediction time.
    pub fn validate(&self) -> Result<()> {
        if self.weights.is_empty() {
            return Err(Error::Model("empty weight vector".into()));
        }
        if self.weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::Model("non-finite weight".into()));
        }
        if !(self.sigma.is_finite() && self.sigma > F::zero()) {
            return Err(Error::Model(format!("sigma must be positive, got {}", self.sigma)));
        }
        if !(self.rbp_p > F::zero() && self.rbp_p < F::one()) {
            return Err(Error::Model(format!(
                "rbp_p must lie in (0, 1), got {}",
                self.rbp_p
            )));
        }
        let d = self.weights.len();
        let p = self.factor_rank;
        match self.mapping_kind {
            MappingKind::BordaFeatures => {}
            MappingKind::MatrixFactors => {
                if p == 0 || !d.is_multiple_of(3 * p) {
                    return Err(Error::Model(format!(
                        "MF weight dimension {d} is not 3*p*m for factor rank {p}"
                    )));
                }
            }
            MappingKind::TensorFactors => {
                if d != 2 * p {
                    return Err(Error::Model(format!(
                        "TF weight dimension {d} does not equal 2*p for factor rank {p}"
                    )));
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn raw(qid: &str, rows: Vec<(&str, i64, Vec<Option<u32>>)>) -> RawQuery {
        RawQuery {
            query_id: qid.into(),
            rows: rows
                .into_iter()
                .map(|(d, g, p)| RawDocRow {
                    doc_name: d.into(),
                    grade: g,
                    positions: p,
                })
                .collect(),
        }
    }

    #[test]
    fn partial_ranking_rejects_gaps() {
        assert!(PartialRanking::new(vec![Some(1), Some(3), None]).is_err());
        assert!(PartialRanking::new(vec![Some(1), Some(1)]).is_err());
        assert!(PartialRanking::new(vec![Some(2), Some(1), None]).is_ok());
    }

    #[test]
    fn reindex_compacts_positions_in_order() {
        // Docs {A, B, C}; one input ranks A at raw 3 and C at raw 7.
        let q = reindex(&raw(
            "q",
            vec![
                ("A", -1, vec![Some(3)]),
                ("B", -1, vec![None]),
                ("C", -1, vec![Some(7)]),
            ],
        ))
        .unwrap();
        let input = &q.inputs[0];
        assert_eq!(input.position(ItemId(0)), Some(1));
        assert_eq!(input.position(ItemId(1)), None);
        assert_eq!(input.position(ItemId(2)), Some(2));
        assert!(q.labels.is_none());
    }

    #[test]
    fn reindex_assigns_ids_in_row_order() {
        let q = reindex(&raw(
            "q",
            vec![
                ("z", 2, vec![Some(1)]),
                ("a", 0, vec![Some(2)]),
            ],
        ))
        .unwrap();
        assert_eq!(q.doc_names, vec!["z".to_string(), "a".to_string()]);
        assert_eq!(q.labels, Some(vec![2, 0]));
    }

    #[test]
    fn reindex_rejects_duplicate_docs_and_positions() {
        let dup_doc = raw(
            "q",
            vec![("A", -1, vec![Some(1)]), ("A", -1, vec![Some(2)])],
        );
        assert!(reindex(&dup_doc).is_err());

        let dup_pos = raw(
            "q",
            vec![("A", -1, vec![Some(4)]), ("B", -1, vec![Some(4)])],
        );
        assert!(reindex(&dup_pos).is_err());
    }

    #[test]
    fn reindex_rejects_mixed_labeling_and_bad_grades() {
        let mixed = raw("q", vec![("A", 1, vec![Some(1)]), ("B", -1, vec![Some(2)])]);
        assert!(reindex(&mixed).is_err());
        let bad = raw("q", vec![("A", -2, vec![Some(1)])]);
        assert!(reindex(&bad).is_err());
    }

    #[test]
    fn rank_by_scores_breaks_ties_by_item_id() {
        let ranked = rank_by_scores::<f64>(&[1.0, 3.0, 3.0, 0.5]);
        let order: Vec<usize> = ranked.iter().map(|(i, _)| i.0).collect();
        assert_eq!(order, vec![1, 2, 0, 3]);
    }

    #[test]
    fn rank_distribution_validates() {
        assert!(RankDistribution::new(vec![0.5f64, 0.5]).is_ok());
        assert!(RankDistribution::new(vec![0.7f64, 0.7]).is_err());
        assert!(RankDistribution::new(vec![-0.1f64, 1.1]).is_err());
        let d = RankDistribution::new(vec![0.25f64, 0.5, 0.25]).unwrap();
        assert!((d.mean() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn model_validation_checks_dimensions() {
        let mut m = AggregationModel::<f64> {
            weights: vec![0.0; 10],
            sigma: 0.01,
            mapping_kind: MappingKind::TensorFactors,
            factor_rank: 5,
            objective_kind: ObjectiveKind::ExpectedNdcg,
            rbp_p: 0.95,
            y_max: 2,
            seed: 0,
        };
        assert!(m.validate().is_ok());
        m.weights = vec![0.0; 9];
        assert!(m.validate().is_err());
        m.mapping_kind = MappingKind::MatrixFactors;
        m.weights = vec![0.0; 45];
        assert!(m.validate().is_ok());
        m.weights = vec![0.0; 44];
        assert!(m.validate().is_err());
    }
}
