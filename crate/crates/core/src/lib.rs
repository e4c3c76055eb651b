//! Rank aggregation over stochastic rank distributions.
//!
//! This crate combines several partial rankings of the same item set into a
//! single consensus ranking. Besides the classic explicit aggregators (Borda
//! count, reciprocal rank fusion) it implements their stochastic
//! counterparts: every pair of items is treated as a Bernoulli contest, an
//! item's rank becomes a Poisson-binomial random variable, and scores are
//! taken in expectation over that rank distribution. Absent items then
//! contribute maximally uncertain contests instead of being skipped, which is
//! what makes the stochastic variants robust to incomplete inputs.
//!
//! On top of the aggregators the crate provides:
//!
//! * graded relevance metrics (NDCG, ERR, RBP) and run evaluation,
//! * feature mappings of partial rankings (Borda features, per-input SVD
//!   factors, CP tensor factors) with an in-repo truncated SVD and CP-ALS,
//! * supervised training of linear scoring models by gradient ascent on
//!   smoothed expected metrics,
//! * deterministic experiment harnesses: synthetic dataset generation,
//!   k-fold splits, and input-subsampling robustness sweeps,
//! * readers and writers for the text dataset format, TREC-style run files,
//!   and JSON model files.
//!
//! The numeric core is generic over the floating-point type through
//! [`Scalar`]; the crate root exports `f64` aliases which every binary and
//! harness uses.

// Index loops in the numeric kernels mirror the recurrences they implement.
#![allow(clippy::needless_range_loop)]

pub mod error;
pub mod experiments;
pub mod features;
pub mod io;
pub mod linalg;
pub mod metrics;
pub mod model;
pub mod rankdist;
pub mod scalar;
pub mod train;
pub mod unsup;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// Scalar type used by the shipped binaries and harnesses.
pub type Real = f64;

/// Rank distribution over `Real`.
pub type RankDistribution = model::RankDistribution<Real>;
/// Consensus ranking of one query over `Real`.
pub type QueryRanking = model::QueryRanking<Real>;
/// Aggregated run over `Real`.
pub type AggregateRun = model::AggregateRun<Real>;
/// Feature table over `Real`.
pub type FeatureTable = model::FeatureTable<Real>;
/// Trained scoring model over `Real`.
pub type AggregationModel = model::AggregationModel<Real>;
