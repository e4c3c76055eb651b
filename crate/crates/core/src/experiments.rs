//! Experiment support: synthetic corpora, k-fold splits, and the
//! input-subsampling robustness sweep.
//!
//! Every procedure here is seeded and deterministic. The three consumers of
//! randomness draw from separate, named streams of the same counter-based
//! generator, so adding draws to one never shifts another.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::metrics::{evaluate_metric, MetricParams, MetricSpec};
use crate::model::{ItemId, PartialRanking, QueryInstance};
use crate::scalar::{fl_usize, Scalar};
use crate::unsup::{aggregate_all, AggregateParams, Method};

/// RNG stream for synthetic dataset generation.
pub const STREAM_DATASET: u64 = 1;
/// RNG stream for k-fold shuffling.
pub const STREAM_FOLDS: u64 = 2;
/// RNG stream for robustness subsampling.
pub const STREAM_SWEEP: u64 = 3;

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Synthetic corpus shape and noise knobs.
#[derive(Clone, Copy, Debug)]
pub struct SynthConfig {
    pub n_queries: usize,
    pub n_items: usize,
    pub m_inputs: usize,
    /// Probability that an input drops an item.
    pub missing_rate: f64,
    /// Probability of each adjacent transposition during one noise pass.
    pub noise: f64,
    /// Number of relevance levels; grades run `0..grades-1`.
    pub grades: u32,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_queries: 20,
            n_items: 30,
            m_inputs: 20,
            missing_rate: 0.5,
            noise: 0.1,
            grades: 3,
            seed: 1,
        }
    }
}

impl SynthConfig {
    fn validate(&self) -> Result<()> {
        if self.n_queries == 0 || self.n_items == 0 || self.m_inputs == 0 {
            return Err(Error::data(
                "queries, items, and inputs must all be positive",
            ));
        }
        if !(0.0..=1.0).contains(&self.missing_rate) {
            return Err(Error::data(format!(
                "missing rate must lie in [0, 1], got {}",
                self.missing_rate
            )));
        }
        if !(0.0..=1.0).contains(&self.noise) {
            return Err(Error::data(format!(
                "noise must lie in [0, 1], got {}",
                self.noise
            )));
        }
        if self.grades == 0 {
            return Err(Error::data("need at least one relevance grade"));
        }
        Ok(())
    }
}

/// Generates a labeled synthetic corpus.
///
/// Each query plants a ground-truth permutation of the items. Grades are
/// quantile buckets of the planted position (the top of the list gets
/// `grades-1`, the bottom 0). Each ranking input is the planted order run
/// through one pass of adjacent transpositions (each applied with
/// probability `noise`), after which every item is independently dropped
/// with probability `missing_rate`. An input that loses all its items is
/// redrawn; a hundred straight failures (possible only when the missing
/// rate is at or near 1) is an error.
pub fn generate_synthetic(config: &SynthConfig) -> Result<Vec<QueryInstance>> {
    config.validate()?;
    let mut rng = stream_rng(config.seed, STREAM_DATASET);
    let n = config.n_items;
    let doc_names: Vec<String> = (0..n).map(|i| format!("d{i}")).collect();
    let mut out = Vec::with_capacity(config.n_queries);
    for qi in 0..config.n_queries {
        let mut planted: Vec<usize> = (0..n).collect();
        planted.shuffle(&mut rng);
        let mut labels = vec![0u32; n];
        for (pos, &item) in planted.iter().enumerate() {
            let bucket = pos * config.grades as usize / n;
            labels[item] = config.grades - 1 - bucket as u32;
        }
        let mut inputs = Vec::with_capacity(config.m_inputs);
        for _ in 0..config.m_inputs {
            let mut kept: Vec<ItemId> = Vec::new();
            for attempt in 0.. {
                if attempt == 100 {
                    return Err(Error::data(format!(
                        "query {} kept producing empty inputs; lower the missing rate",
                        qi + 1
                    )));
                }
                let mut order = planted.clone();
                for t in 0..n.saturating_sub(1) {
                    if rng.gen_bool(config.noise) {
                        order.swap(t, t + 1);
                    }
                }
                kept = order
                    .into_iter()
                    .filter(|_| !rng.gen_bool(config.missing_rate))
                    .map(ItemId)
                    .collect();
                if !kept.is_empty() {
                    break;
                }
            }
            inputs.push(PartialRanking::from_order(n, &kept)?);
        }
        out.push(QueryInstance::new(
            (qi + 1).to_string(),
            doc_names.clone(),
            inputs,
            Some(labels),
        )?);
    }
    Ok(out)
}

/// One cross-validation fold, as indices into the query list.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Fold {
    pub train: Vec<usize>,
    pub valid: Vec<usize>,
    pub test: Vec<usize>,
}

/// Splits `query_count` queries into `k` folds: queries are shuffled once,
/// cut into contiguous chunks (the first `count % k` chunks one longer),
/// and fold `i` tests on chunk `i`, validates on chunk `(i+1) % k`, and
/// trains on the rest. Every query appears in exactly one test chunk.
pub fn kfold(query_count: usize, k: usize, seed: u64) -> Result<Vec<Fold>> {
    if k < 2 {
        return Err(Error::data(format!("need at least 2 folds, got {k}")));
    }
    if k > query_count {
        return Err(Error::data(format!(
            "cannot cut {query_count} queries into {k} folds"
        )));
    }
    let mut order: Vec<usize> = (0..query_count).collect();
    order.shuffle(&mut stream_rng(seed, STREAM_FOLDS));
    let base = query_count / k;
    let extra = query_count % k;
    let mut chunks: Vec<Vec<usize>> = Vec::with_capacity(k);
    let mut start = 0;
    for i in 0..k {
        let len = base + usize::from(i < extra);
        chunks.push(order[start..start + len].to_vec());
        start += len;
    }
    Ok((0..k)
        .map(|i| {
            let valid_chunk = (i + 1) % k;
            let mut train: Vec<usize> = (0..k)
                .filter(|&c| c != i && c != valid_chunk)
                .flat_map(|c| chunks[c].iter().copied())
                .collect();
            let mut valid = chunks[valid_chunk].clone();
            let mut test = chunks[i].clone();
            train.sort_unstable();
            valid.sort_unstable();
            test.sort_unstable();
            Fold { train, valid, test }
        })
        .collect())
}

/// Robustness sweep configuration.
#[derive(Clone, Debug)]
pub struct SweepConfig<F> {
    pub methods: Vec<Method>,
    /// Input subsample sizes, reported in this order.
    pub sizes: Vec<usize>,
    pub repetitions: usize,
    pub metric: MetricSpec,
    pub metric_params: MetricParams<F>,
    pub aggregate: AggregateParams<F>,
    pub seed: u64,
}

/// One measured run of the sweep: a method's corpus-mean metric on a
/// specific subsample.
#[derive(Clone, Debug)]
pub struct SweepRow<F> {
    pub method: Method,
    pub size: usize,
    pub repetition: usize,
    pub value: F,
}

/// Summary of one (method, size) cell over all repetitions.
#[derive(Clone, Debug)]
pub struct SweepSummary<F> {
    pub method: Method,
    pub size: usize,
    pub mean: F,
    /// Population standard deviation; 0 for a single repetition.
    pub std: F,
}

/// Sweep results with their CSV rendering.
#[derive(Clone, Debug)]
pub struct SweepTable<F> {
    pub metric: MetricSpec,
    pub rows: Vec<SweepRow<F>>,
    pub summaries: Vec<SweepSummary<F>>,
}

impl<F: Scalar> SweepTable<F> {
    /// CSV rows `method,size,repetition,metric,value` followed by
    /// `method,size,ALL,mean|std,value` summary rows, all to six decimals.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("method,size,repetition,metric,value\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{:.6}\n",
                r.method.name(),
                r.size,
                r.repetition,
                self.metric,
                r.value
            ));
        }
        for s in &self.summaries {
            out.push_str(&format!(
                "{},{},ALL,mean,{:.6}\n",
                s.method.name(),
                s.size,
                s.mean
            ));
            out.push_str(&format!(
                "{},{},ALL,std,{:.6}\n",
                s.method.name(),
                s.size,
                s.std
            ));
        }
        out
    }
}

fn subsample_inputs(q: &QueryInstance, picked: &[usize]) -> Result<QueryInstance> {
    QueryInstance::new(
        q.query_id.clone(),
        q.doc_names.clone(),
        picked.iter().map(|&k| q.inputs[k].clone()).collect(),
        q.labels.clone(),
    )
}

/// Measures how each method degrades as the number of ranking inputs
/// shrinks.
///
/// For every size and repetition, each query independently draws a uniform
/// subsample of that many inputs (without replacement, original input order
/// kept); all methods then aggregate the *same* subsampled instances, so
/// method comparisons are paired. The recorded value is the corpus mean of
/// the configured metric. Subsampling is sequential and seeded; results are
/// independent of thread count.
pub fn robustness_sweep<F: Scalar>(
    instances: &[QueryInstance],
    config: &SweepConfig<F>,
) -> Result<SweepTable<F>> {
    if instances.is_empty() {
        return Err(Error::data("no queries to sweep over"));
    }
    if config.methods.is_empty() {
        return Err(Error::data("no methods selected"));
    }
    if config.sizes.is_empty() {
        return Err(Error::data("no subsample sizes given"));
    }
    if config.repetitions == 0 {
        return Err(Error::data("need at least one repetition"));
    }
    for q in instances {
        q.labels_required()?;
        for &size in &config.sizes {
            if size == 0 || size > q.m() {
                return Err(Error::data(format!(
                    "subsample size {size} is invalid for query {} with {} inputs",
                    q.query_id,
                    q.m()
                )));
            }
        }
    }

    let mut rng = stream_rng(config.seed, STREAM_SWEEP);
    let mut rows = Vec::with_capacity(config.sizes.len() * config.repetitions * config.methods.len());
    for &size in &config.sizes {
        for rep in 0..config.repetitions {
            let subs: Result<Vec<QueryInstance>> = instances
                .iter()
                .map(|q| {
                    let mut picked: Vec<usize> =
                        rand::seq::index::sample(&mut rng, q.m(), size).into_vec();
                    picked.sort_unstable();
                    subsample_inputs(q, &picked)
                })
                .collect();
            let subs = subs?;
            for &method in &config.methods {
                let run = aggregate_all(&subs, method, &config.aggregate);
                let mut sum = F::zero();
                for (q, ranking) in subs.iter().zip(&run.queries) {
                    sum = sum
                        + evaluate_metric(
                            config.metric,
                            &ranking.order(),
                            q.labels_required()?,
                            &config.metric_params,
                        );
                }
                rows.push(SweepRow {
                    method,
                    size,
                    repetition: rep,
                    value: sum / fl_usize::<F>(subs.len()),
                });
            }
        }
    }

    let reps = fl_usize::<F>(config.repetitions);
    let mut summaries = Vec::with_capacity(config.sizes.len() * config.methods.len());
    for &size in &config.sizes {
        for &method in &config.methods {
            let values: Vec<F> = rows
                .iter()
                .filter(|r| r.size == size && r.method == method)
                .map(|r| r.value)
                .collect();
            let mean = values.iter().copied().sum::<F>() / reps;
            let var = values
                .iter()
                .map(|&v| (v - mean) * (v - mean))
                .sum::<F>()
                / reps;
            summaries.push(SweepSummary {
                method,
                size,
                mean,
                std: var.sqrt(),
            });
        }
    }
    Ok(SweepTable {
        metric: config.metric,
        rows,
        summaries,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::io::write_agg_string;
    use crate::Real;

    #[test]
    fn synthetic_corpus_is_deterministic() {
        let config = SynthConfig {
            n_queries: 4,
            n_items: 12,
            m_inputs: 5,
            ..SynthConfig::default()
        };
        let a = generate_synthetic(&config).unwrap();
        let b = generate_synthetic(&config).unwrap();
        assert_eq!(write_agg_string(&a), write_agg_string(&b));
        let c = generate_synthetic(&SynthConfig {
            seed: 2,
            ..config
        })
        .unwrap();
        assert_ne!(write_agg_string(&a), write_agg_string(&c));
    }

    #[test]
    fn synthetic_corpus_has_the_requested_shape() {
        let config = SynthConfig {
            n_queries: 3,
            n_items: 10,
            m_inputs: 4,
            grades: 5,
            ..SynthConfig::default()
        };
        let data = generate_synthetic(&config).unwrap();
        assert_eq!(data.len(), 3);
        for (qi, q) in data.iter().enumerate() {
            assert_eq!(q.query_id, (qi + 1).to_string());
            assert_eq!(q.n(), 10);
            assert_eq!(q.m(), 4);
            let labels = q.labels.as_ref().unwrap();
            // Quantile buckets: with 10 items and 5 grades, two of each.
            let mut counts = [0usize; 5];
            for &y in labels {
                counts[y as usize] += 1;
            }
            assert_eq!(counts, [2, 2, 2, 2, 2]);
        }
    }

    #[test]
    fn clean_inputs_reproduce_the_planted_order() {
        let config = SynthConfig {
            n_queries: 2,
            n_items: 8,
            m_inputs: 3,
            missing_rate: 0.0,
            noise: 0.0,
            grades: 4,
            seed: 9,
        };
        let data = generate_synthetic(&config).unwrap();
        for q in &data {
            let labels = q.labels.as_ref().unwrap();
            let first = &q.inputs[0];
            for input in &q.inputs {
                for i in 0..q.n() {
                    assert_eq!(input.position(ItemId(i)), first.position(ItemId(i)));
                }
            }
            // The front of the planted order carries the top grade.
            for i in 0..q.n() {
                let pos = first.position(ItemId(i)).unwrap();
                if pos == 1 {
                    assert_eq!(labels[i], 3);
                }
                if pos == q.n() as u32 {
                    assert_eq!(labels[i], 0);
                }
            }
        }
    }

    #[test]
    fn total_missingness_is_an_error() {
        let config = SynthConfig {
            n_queries: 1,
            n_items: 4,
            m_inputs: 1,
            missing_rate: 1.0,
            ..SynthConfig::default()
        };
        let e = generate_synthetic(&config).unwrap_err().to_string();
        assert!(e.contains("missing rate"), "{e}");
    }

    #[test]
    fn kfold_partitions_the_queries() {
        let folds = kfold(23, 5, 7).unwrap();
        assert_eq!(folds.len(), 5);
        let mut test_seen = [0usize; 23];
        for fold in &folds {
            for &i in &fold.test {
                test_seen[i] += 1;
            }
            let mut all: Vec<usize> = fold
                .train
                .iter()
                .chain(&fold.valid)
                .chain(&fold.test)
                .copied()
                .collect();
            all.sort_unstable();
            assert_eq!(all, (0..23).collect::<Vec<_>>());
        }
        assert!(test_seen.iter().all(|&c| c == 1));
        let sizes: Vec<usize> = folds.iter().map(|f| f.test.len()).collect();
        assert_eq!(sizes.iter().sum::<usize>(), 23);
        assert!(sizes.iter().all(|&s| s == 4 || s == 5));
        assert_eq!(kfold(23, 5, 7).unwrap(), folds);
    }

    #[test]
    fn kfold_rejects_degenerate_counts() {
        assert!(kfold(10, 1, 0).is_err());
        assert!(kfold(3, 4, 0).is_err());
    }

    #[test]
    fn sweep_is_deterministic_and_well_shaped() {
        let data = generate_synthetic(&SynthConfig {
            n_queries: 3,
            n_items: 8,
            m_inputs: 4,
            missing_rate: 0.3,
            noise: 0.2,
            grades: 3,
            seed: 5,
        })
        .unwrap();
        let config = SweepConfig::<Real> {
            methods: vec![Method::Borda, Method::StochasticBorda],
            sizes: vec![2, 4],
            repetitions: 3,
            metric: MetricSpec::Ndcg { k: 5 },
            metric_params: MetricParams::default(),
            aggregate: AggregateParams::default(),
            seed: 11,
        };
        let a = robustness_sweep(&data, &config).unwrap();
        let b = robustness_sweep(&data, &config).unwrap();
        assert_eq!(a.to_csv(), b.to_csv());
        assert_eq!(a.rows.len(), 2 * 3 * 2);
        assert_eq!(a.summaries.len(), 2 * 2);
        let csv = a.to_csv();
        assert!(csv.starts_with("method,size,repetition,metric,value\n"));
        assert!(csv.contains("borda,2,0,ndcg@5,"), "{csv}");
        assert!(csv.contains("stagg-bc,4,ALL,mean,"), "{csv}");
        assert_eq!(csv.lines().count(), 1 + 12 + 8);
    }

    #[test]
    fn full_size_subsample_has_zero_std() {
        let data = generate_synthetic(&SynthConfig {
            n_queries: 2,
            n_items: 6,
            m_inputs: 4,
            missing_rate: 0.4,
            noise: 0.2,
            grades: 2,
            seed: 3,
        })
        .unwrap();
        let config = SweepConfig::<Real> {
            methods: vec![Method::Rrf],
            sizes: vec![4],
            repetitions: 5,
            metric: MetricSpec::Err,
            metric_params: MetricParams::default(),
            aggregate: AggregateParams::default(),
            seed: 1,
        };
        let table = robustness_sweep(&data, &config).unwrap();
        // Size-m subsamples always pick every input, so all reps agree.
        assert!(table.summaries[0].std.abs() < 1e-15);
        let first = table.rows[0].value;
        assert!(table.rows.iter().all(|r| (r.value - first).abs() < 1e-15));
    }

    #[test]
    fn oversized_subsample_is_rejected() {
        let data = generate_synthetic(&SynthConfig {
            n_queries: 1,
            n_items: 5,
            m_inputs: 3,
            ..SynthConfig::default()
        })
        .unwrap();
        let config = SweepConfig::<Real> {
            methods: vec![Method::Borda],
            sizes: vec![5],
            repetitions: 1,
            metric: MetricSpec::Ndcg { k: 0 },
            metric_params: MetricParams::default(),
            aggregate: AggregateParams::default(),
            seed: 1,
        };
        assert!(robustness_sweep(&data, &config).is_err());
    }

    #[test]
    fn single_repetition_reports_zero_std() {
        let data = generate_synthetic(&SynthConfig {
            n_queries: 2,
            n_items: 6,
            m_inputs: 3,
            ..SynthConfig::default()
        })
        .unwrap();
        let config = SweepConfig::<Real> {
            methods: vec![Method::Borda],
            sizes: vec![2],
            repetitions: 1,
            metric: MetricSpec::Rbp,
            metric_params: MetricParams::default(),
            aggregate: AggregateParams::default(),
            seed: 1,
        };
        let table = robustness_sweep(&data, &config).unwrap();
        assert_eq!(table.rows.len(), 1);
        assert_eq!(table.summaries.len(), 1);
        assert_eq!(table.summaries[0].std, 0.0);
        assert_eq!(table.summaries[0].mean, table.rows[0].value);
    }
}
