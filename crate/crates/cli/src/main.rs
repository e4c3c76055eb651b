//! `stagg`: rank aggregation from the command line.
//!
//! Subcommands cover the full workflow: generate or ingest ranking data,
//! fuse it with unsupervised aggregators, train and apply supervised
//! models, score runs, and measure robustness under input subsampling.
//! Every command is deterministic given its flags and seed, and output
//! bytes do not depend on `--threads`.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use stagg_core::experiments::{generate_synthetic, robustness_sweep, SweepConfig, SynthConfig};
use stagg_core::features::{map_features, FeatureConfig};
use stagg_core::io::{
    parse_agg_file, read_run, resolve_run, save_model, write_agg_file, write_feature_csv,
    write_run,
};
use stagg_core::metrics::{evaluate_run, MetricParams, MetricSpec};
use stagg_core::model::{MappingKind, ObjectiveKind};
use stagg_core::rankdist::GapDenominator;
use stagg_core::train::{fit, predict, TrainConfig};
use stagg_core::unsup::{aggregate_all, AggregateParams, Method};
use stagg_core::{AggregateRun, Error, FeatureTable, QueryRanking, Real, Result};

#[derive(Parser)]
#[command(
    name = "stagg",
    version,
    about = "Rank fusion toolkit with stochastic rank modeling",
    propagate_version = true
)]
struct Cli {
    /// Worker threads for per-query parallelism (0 = all cores).
    /// Output bytes are identical for any value.
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fuse ranking inputs with an unsupervised aggregator.
    Aggregate(AggregateArgs),
    /// Score a run file against labeled data.
    Eval(EvalArgs),
    /// Train a supervised aggregation model.
    Train(TrainArgs),
    /// Apply a trained model to a data file.
    Predict(PredictArgs),
    /// Generate a labeled synthetic corpus.
    Synth(SynthArgs),
    /// Measure aggregator robustness under input subsampling.
    Robustness(RobustnessArgs),
}

#[derive(Args)]
struct AggregateArgs {
    /// Aggregation method: borda, rrf, stagg-bc, or stagg-rrf.
    #[arg(long)]
    method: String,
    /// Input data file in the aggregation text format.
    #[arg(long)]
    input: PathBuf,
    /// Output run file (TREC format).
    #[arg(long)]
    output: PathBuf,
    /// Additive constant of the reciprocal rank formulas.
    #[arg(long, default_value_t = 40.0)]
    rrf_c: Real,
    /// Contest-probability denominator: items or present.
    #[arg(long, default_value = "items")]
    gap_denominator: String,
    /// Run tag written in the last column.
    #[arg(long, default_value = "stagg")]
    tag: String,
}

#[derive(Args)]
struct EvalArgs {
    /// Run file to score.
    #[arg(long)]
    run: PathBuf,
    /// Labeled data file the run was produced from.
    #[arg(long)]
    data: PathBuf,
    /// Comma-separated metrics, e.g. ndcg@5,ndcg@10,err,rbp.
    #[arg(long, default_value = "ndcg@5,ndcg@10,err,rbp")]
    metrics: String,
    /// RBP persistence.
    #[arg(long, default_value_t = 0.95)]
    rbp_p: Real,
    /// Maximum relevance grade for ERR.
    #[arg(long, default_value_t = 2)]
    ymax: u32,
    /// Output CSV path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct TrainArgs {
    /// Objective: ndcg, err, or rbp.
    #[arg(long)]
    objective: String,
    /// Feature mapping: bf, mf, or tf.
    #[arg(long)]
    features: String,
    /// Factor rank of the mf/tf mappings.
    #[arg(long, default_value_t = 5)]
    rank: usize,
    /// Labeled training data.
    #[arg(long)]
    train: PathBuf,
    /// Labeled validation data (selects the grid point).
    #[arg(long)]
    valid: PathBuf,
    /// Output model JSON path; the log goes to the same path with a
    /// .log.csv extension.
    #[arg(long)]
    model: PathBuf,
    /// Seed for feature computation.
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Comma-separated learning rates (default 1e-1..1e-6).
    #[arg(long)]
    lr_grid: Option<String>,
    /// Comma-separated score-noise widths (default 1e-1..1e-4).
    #[arg(long)]
    sigma_grid: Option<String>,
    /// Gradient ascent steps per grid point.
    #[arg(long, default_value_t = 500)]
    max_iters: usize,
    /// Validation metric that picks the winning grid point.
    #[arg(long, default_value = "ndcg@10")]
    valid_metric: String,
    /// RBP persistence of the rbp objective and metric.
    #[arg(long, default_value_t = 0.95)]
    rbp_p: Real,
    /// Maximum relevance grade for the err objective and metric.
    #[arg(long, default_value_t = 2)]
    ymax: u32,
    /// Also write the training set's feature vectors to this CSV.
    #[arg(long)]
    dump_features: Option<PathBuf>,
}

#[derive(Args)]
struct PredictArgs {
    /// Trained model JSON.
    #[arg(long)]
    model: PathBuf,
    /// Data file to rank.
    #[arg(long)]
    data: PathBuf,
    /// Output run file (TREC format).
    #[arg(long)]
    output: PathBuf,
    /// Run tag written in the last column.
    #[arg(long, default_value = "stagg")]
    tag: String,
}

#[derive(Args)]
struct SynthArgs {
    /// Number of queries.
    #[arg(long, default_value_t = 20)]
    queries: usize,
    /// Items per query.
    #[arg(long, default_value_t = 30)]
    items: usize,
    /// Ranking inputs per query.
    #[arg(long, default_value_t = 20)]
    inputs: usize,
    /// Probability that an input drops an item.
    #[arg(long, default_value_t = 0.5)]
    missing: f64,
    /// Adjacent-transposition probability of the noise pass.
    #[arg(long, default_value_t = 0.1)]
    noise: f64,
    /// Number of relevance grades.
    #[arg(long, default_value_t = 3)]
    grades: u32,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Output data file in the aggregation text format.
    #[arg(long)]
    output: PathBuf,
}

#[derive(Args)]
struct RobustnessArgs {
    /// Labeled data file.
    #[arg(long)]
    data: PathBuf,
    /// Comma-separated methods to compare.
    #[arg(long, default_value = "borda,rrf,stagg-bc,stagg-rrf")]
    methods: String,
    /// Comma-separated input subsample sizes.
    #[arg(long, default_value = "5,10,15,20")]
    sizes: String,
    /// Repetitions per size.
    #[arg(long, default_value_t = 20)]
    reps: usize,
    /// Metric reported per run.
    #[arg(long, default_value = "ndcg@5")]
    metric: String,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Additive constant of the reciprocal rank formulas.
    #[arg(long, default_value_t = 40.0)]
    rrf_c: Real,
    /// Contest-probability denominator: items or present.
    #[arg(long, default_value = "items")]
    gap_denominator: String,
    /// RBP persistence.
    #[arg(long, default_value_t = 0.95)]
    rbp_p: Real,
    /// Maximum relevance grade for ERR.
    #[arg(long, default_value_t = 2)]
    ymax: u32,
    /// Output CSV path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() {
    let cli = Cli::parse();
    let outcome = with_thread_pool(cli.threads, || dispatch(cli.command));
    if let Err(e) = outcome {
        eprintln!("error: {e}");
        std::process::exit(if e.is_usage() { 2 } else { 1 });
    }
}

/// Runs `f` inside a rayon pool of the requested size; 0 keeps the global
/// default (all cores). Per-query work is order-preserving, so results do
/// not depend on the pool size.
fn with_thread_pool<T: Send>(threads: usize, f: impl FnOnce() -> Result<T> + Send) -> Result<T> {
    if threads == 0 {
        return f();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Io(std::io::Error::other(format!("thread pool: {e}"))))?;
    pool.install(f)
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Aggregate(args) => cmd_aggregate(args),
        Command::Eval(args) => cmd_eval(args),
        Command::Train(args) => cmd_train(args),
        Command::Predict(args) => cmd_predict(args),
        Command::Synth(args) => cmd_synth(args),
        Command::Robustness(args) => cmd_robustness(args),
    }
}

fn parse_gap_denominator(s: &str) -> Result<GapDenominator> {
    match s {
        "items" => Ok(GapDenominator::ItemCount),
        "present" => Ok(GapDenominator::PresentCount),
        other => Err(Error::InvalidData(format!(
            "unknown gap denominator {other:?} (expected items or present)"
        ))),
    }
}

fn parse_real_list(flag: &str, s: &str) -> Result<Vec<Real>> {
    let values: Vec<Real> = s
        .split(',')
        .filter(|part| !part.trim().is_empty())
        .map(|part| {
            part.trim()
                .parse::<Real>()
                .map_err(|_| Error::InvalidData(format!("bad value {part:?} in --{flag}")))
        })
        .collect::<Result<_>>()?;
    if values.is_empty() {
        return Err(Error::InvalidData(format!("--{flag} lists no values")));
    }
    Ok(values)
}

fn parse_usize_list(flag: &str, s: &str) -> Result<Vec<usize>> {
    let values: Vec<usize> = s
        .split(',')
        .filter(|part| !part.trim().is_empty())
        .map(|part| {
            part.trim()
                .parse::<usize>()
                .map_err(|_| Error::InvalidData(format!("bad value {part:?} in --{flag}")))
        })
        .collect::<Result<_>>()?;
    if values.is_empty() {
        return Err(Error::InvalidData(format!("--{flag} lists no values")));
    }
    Ok(values)
}

fn emit(path: Option<&Path>, content: &str) -> Result<()> {
    match path {
        Some(p) => fs::write(p, content)?,
        None => print!("{content}"),
    }
    Ok(())
}

fn cmd_aggregate(args: AggregateArgs) -> Result<()> {
    let method = Method::parse(&args.method)?;
    let params = AggregateParams {
        rrf_c: args.rrf_c,
        gap_denominator: parse_gap_denominator(&args.gap_denominator)?,
    };
    let instances = parse_agg_file(&args.input)?;
    let run = aggregate_all(&instances, method, &params);
    write_run(&run, &args.output, &args.tag)
}

fn cmd_eval(args: EvalArgs) -> Result<()> {
    let specs = MetricSpec::parse_list(&args.metrics)?;
    let params = MetricParams {
        rbp_p: args.rbp_p,
        y_max: args.ymax,
    };
    let instances = parse_agg_file(&args.data)?;
    let parsed = read_run(&args.run)?;
    let resolved = resolve_run(&parsed, &instances)?;
    let table = evaluate_run(&resolved, &instances, &specs, &params)?;
    emit(args.out.as_deref(), &table.to_csv())
}

fn cmd_train(args: TrainArgs) -> Result<()> {
    let mut config = TrainConfig::<Real>::new(
        ObjectiveKind::parse(&args.objective)?,
        MappingKind::parse(&args.features)?,
    );
    config.factor_rank = args.rank;
    config.seed = args.seed;
    config.max_iterations = args.max_iters;
    config.valid_metric = MetricSpec::parse(&args.valid_metric)?;
    config.objective.rbp_p = args.rbp_p;
    config.objective.y_max = args.ymax;
    if let Some(s) = &args.lr_grid {
        config.lr_grid = parse_real_list("lr-grid", s)?;
    }
    if let Some(s) = &args.sigma_grid {
        config.sigma_grid = parse_real_list("sigma-grid", s)?;
    }

    let train_set = parse_agg_file(&args.train)?;
    let valid_set = parse_agg_file(&args.valid)?;

    if let Some(feature_path) = &args.dump_features {
        let feat_config = FeatureConfig::new(config.mapping_kind, config.factor_rank, config.seed);
        let tables: Result<Vec<FeatureTable>> = train_set
            .par_iter()
            .map(|q| map_features(q, &feat_config))
            .collect();
        write_feature_csv(&train_set, &tables?, feature_path)?;
    }

    let outcome = fit(&train_set, &valid_set, &config)?;
    save_model(&outcome.model, &args.model)?;
    fs::write(args.model.with_extension("log.csv"), outcome.log.to_csv())?;
    eprintln!(
        "selected lr={} sigma={} with validation {}={:.6}",
        outcome.best_lr, outcome.model.sigma, config.valid_metric, outcome.best_valid
    );
    Ok(())
}

fn cmd_predict(args: PredictArgs) -> Result<()> {
    let model = stagg_core::io::load_model(&args.model)?;
    let instances = parse_agg_file(&args.data)?;
    let queries: Result<Vec<QueryRanking>> = instances
        .par_iter()
        .map(|q| predict(&model, q))
        .collect();
    let run = AggregateRun::new(queries?);
    write_run(&run, &args.output, &args.tag)
}

fn cmd_synth(args: SynthArgs) -> Result<()> {
    let config = SynthConfig {
        n_queries: args.queries,
        n_items: args.items,
        m_inputs: args.inputs,
        missing_rate: args.missing,
        noise: args.noise,
        grades: args.grades,
        seed: args.seed,
    };
    let data = generate_synthetic(&config)?;
    write_agg_file(&data, &args.output)
}

fn cmd_robustness(args: RobustnessArgs) -> Result<()> {
    let config = SweepConfig::<Real> {
        methods: Method::parse_list(&args.methods)?,
        sizes: parse_usize_list("sizes", &args.sizes)?,
        repetitions: args.reps,
        metric: MetricSpec::parse(&args.metric)?,
        metric_params: MetricParams {
            rbp_p: args.rbp_p,
            y_max: args.ymax,
        },
        aggregate: AggregateParams {
            rrf_c: args.rrf_c,
            gap_denominator: parse_gap_denominator(&args.gap_denominator)?,
        },
        seed: args.seed,
    };
    let instances = parse_agg_file(&args.data)?;
    let table = robustness_sweep(&instances, &config)?;
    emit(args.out.as_deref(), &table.to_csv())
}
