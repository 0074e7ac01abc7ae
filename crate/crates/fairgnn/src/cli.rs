//! Command-line front end: train, eval, hpo, synth, feasibility,
//! sweep-labeled.
//!
//! Every result file a subcommand writes is a pure function of its arguments
//! and seeds; wall times and timestamps go to a separate `metadata.json` so
//! repeated runs are byte-identical.

use crate::data::{
    generate_synthetic, load_dataset, save_dataset, write_result, ExperimentResult, ResultFormat,
    SyntheticConfig,
};
use crate::error::{Error, Result};
use crate::feasibility::{region_scan, BaseRates};
use crate::graph::{make_splits, Dataset, Splits};
use crate::hpo::{search, SearchSpace};
use crate::loss::FairnessConfig;
use crate::metrics::MetricsReport;
use crate::model::{load_checkpoint, save_checkpoint, EncoderKind, ModelParams};
use crate::train::{evaluate, train, TrainConfig, TrainHistory};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use std::path::{Path, PathBuf};
use std::time::Instant;

#[derive(Debug, Parser)]
#[command(name = "fairgnn", version, about = "Fairness-regularized GNN node classification")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train per seed and aggregate test metrics.
    Train(TrainArgs),
    /// Evaluate a saved checkpoint.
    Eval(EvalArgs),
    /// Search (alpha, beta) for the best validation hybrid score.
    Hpo(HpoArgs),
    /// Generate a synthetic dataset and write it as CSV.
    Synth(SynthArgs),
    /// Scan the equal-opportunity + statistical-parity feasibility region.
    Feasibility(FeasibilityArgs),
    /// Compare baseline and fairness-regularized training while varying the
    /// labeled-attribute proportion.
    SweepLabeled(SweepArgs),
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct DataArgs {
    /// Nodes CSV (requires --edges).
    #[arg(long)]
    pub nodes: Option<PathBuf>,
    /// Edges CSV (requires --nodes).
    #[arg(long)]
    pub edges: Option<PathBuf>,
    /// Synthetic generator config (TOML); mutually exclusive with --nodes.
    #[arg(long)]
    pub synthetic: Option<PathBuf>,
}

impl DataArgs {
    fn load(&self) -> Result<Dataset> {
        match (&self.nodes, &self.edges, &self.synthetic) {
            (Some(nodes), Some(edges), None) => load_dataset(nodes, edges),
            (None, None, Some(cfg)) => generate_synthetic(&SyntheticConfig::from_toml_file(cfg)?),
            _ => Err(Error::Config(
                "exactly one data source: either --nodes with --edges, or --synthetic".into(),
            )),
        }
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ModelArgs {
    /// Encoder architecture.
    #[arg(long, value_enum, default_value_t = ModelKind::Gcn)]
    pub model: ModelKind,
    /// Hidden width and embedding size.
    #[arg(long, default_value_t = 16)]
    pub hidden: usize,
    /// Encoder depth.
    #[arg(long, default_value_t = 2)]
    pub layers: usize,
    /// Drop rate on each encoder layer input during training.
    #[arg(long, default_value_t = 0.2)]
    pub dropout: f64,
    /// Learning rate.
    #[arg(long, default_value_t = 1e-2)]
    pub lr: f64,
    /// Training epochs.
    #[arg(long, default_value_t = 100)]
    pub epochs: usize,
    /// Decision threshold on predicted probabilities.
    #[arg(long, default_value_t = 0.5)]
    pub threshold: f64,
    /// Add self-loops before symmetric normalization.
    #[arg(long, default_value_t = true, action = clap::ArgAction::Set)]
    pub self_loops: bool,
    /// Training-set size (nodes with observed label and sensitive attribute).
    #[arg(long, default_value_t = 100)]
    pub labeled_count: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Gcn,
    Sage,
}

impl From<ModelKind> for EncoderKind {
    fn from(kind: ModelKind) -> Self {
        match kind {
            ModelKind::Gcn => EncoderKind::Gcn,
            ModelKind::Sage => EncoderKind::Sage,
        }
    }
}

impl ModelArgs {
    fn train_config(&self, seed: u64, fairness: FairnessConfig) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            lr: self.lr,
            adam: Default::default(),
            seed,
            fairness,
            threshold: self.threshold,
            self_loops: self.self_loops,
        }
    }

    fn method_name(&self, fairness: &FairnessConfig) -> String {
        let base = match self.model {
            ModelKind::Gcn => "gcn",
            ModelKind::Sage => "sage",
        };
        if fairness.alpha > 0.0 || fairness.beta > 0.0 {
            format!("{base}-eosp")
        } else {
            base.to_string()
        }
    }
}

#[derive(Debug, Args, Serialize)]
pub struct TrainArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    /// Equal-opportunity regularizer weight.
    #[arg(long, default_value_t = 0.0)]
    pub alpha: f64,
    /// Statistical-parity regularizer weight.
    #[arg(long, default_value_t = 0.0)]
    pub beta: f64,
    /// Seeds: comma list and/or inclusive ranges, e.g. "0..4" or "1,3,9".
    #[arg(long, env = "FAIRGNN_SEED", default_value = "0")]
    pub seeds: String,
    /// Concurrent runs.
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    /// Output directory.
    #[arg(long)]
    #[serde(skip)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct EvalArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Model checkpoint to evaluate.
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Splits JSON (as written by `train`); evaluates all labeled nodes when
    /// absent.
    #[arg(long)]
    pub splits: Option<PathBuf>,
    /// Which split to evaluate when --splits is given.
    #[arg(long, value_enum, default_value_t = SplitChoice::Test)]
    pub split: SplitChoice,
    /// Decision threshold.
    #[arg(long, default_value_t = 0.5)]
    pub threshold: f64,
    /// Add self-loops before symmetric normalization.
    #[arg(long, default_value_t = true, action = clap::ArgAction::Set)]
    pub self_loops: bool,
    /// Output directory (metrics also print to stdout).
    #[arg(long)]
    #[serde(skip)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitChoice {
    Train,
    Val,
    Test,
    /// All nodes with observed label and sensitive attribute.
    Labeled,
}

#[derive(Debug, Args, Serialize)]
pub struct HpoArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    /// Trial budget; the 19x19 grid makes 361 exhaustive.
    #[arg(long, default_value_t = 15)]
    pub trials: usize,
    /// Seed for the search and the underlying training run.
    #[arg(long, env = "FAIRGNN_SEED", default_value_t = 0)]
    pub seed: u64,
    /// Concurrent trials per suggestion batch.
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    #[arg(long)]
    #[serde(skip)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct SynthArgs {
    /// Synthetic generator config (TOML).
    #[arg(long)]
    pub synthetic: PathBuf,
    #[arg(long)]
    #[serde(skip)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct FeasibilityArgs {
    /// Negative proportion of group a, in (0, 1).
    #[arg(long)]
    pub x: f64,
    /// Negative proportion of group b, in (0, 1).
    #[arg(long)]
    pub y: f64,
    /// Grid resolution per axis.
    #[arg(long, default_value_t = 200)]
    pub resolution: usize,
    #[arg(long)]
    #[serde(skip)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct SweepArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    /// Labeled-attribute proportions as percentages of n.
    #[arg(long, default_value = "20,30,37.5,50")]
    pub proportions: String,
    /// EOSP arm equal-opportunity weight.
    #[arg(long, default_value_t = 1.0)]
    pub alpha: f64,
    /// EOSP arm statistical-parity weight.
    #[arg(long, default_value_t = 1.0)]
    pub beta: f64,
    #[arg(long, env = "FAIRGNN_SEED", default_value = "0")]
    pub seeds: String,
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    #[arg(long)]
    #[serde(skip)]
    pub out: PathBuf,
}

/// Parses "0..4", "7" or "1,3,5..8" into an explicit seed list.
pub fn parse_seeds(spec: &str) -> Result<Vec<u64>> {
    let mut seeds = Vec::new();
    for part in spec.split(',') {
        let part = part.trim();
        if part.is_empty() {
            continue;
        }
        if let Some((lo, hi)) = part.split_once("..") {
            let lo: u64 = lo
                .trim()
                .parse()
                .map_err(|_| Error::Config(format!("bad seed range start {lo:?}")))?;
            let hi: u64 = hi
                .trim()
                .parse()
                .map_err(|_| Error::Config(format!("bad seed range end {hi:?}")))?;
            if hi < lo {
                return Err(Error::Config(format!("seed range {part:?} is reversed")));
            }
            seeds.extend(lo..=hi);
        } else {
            seeds.push(
                part.parse().map_err(|_| Error::Config(format!("bad seed {part:?}")))?,
            );
        }
    }
    if seeds.is_empty() {
        return Err(Error::Config("seed list is empty".into()));
    }
    Ok(seeds)
}

fn parse_proportions(spec: &str) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    for part in spec.split(',') {
        let part = part.trim();
        if part.is_empty() {
            continue;
        }
        let pct: f64 =
            part.parse().map_err(|_| Error::Config(format!("bad proportion {part:?}")))?;
        if !(pct > 0.0 && pct <= 100.0) {
            return Err(Error::Config(format!("proportion {pct} must lie in (0, 100]")));
        }
        out.push(pct);
    }
    if out.is_empty() {
        return Err(Error::Config("proportion list is empty".into()));
    }
    Ok(out)
}

struct OutputDir {
    root: PathBuf,
    wall_times_ms: Vec<(String, u128)>,
}

impl OutputDir {
    fn create(root: &Path) -> Result<Self> {
        std::fs::create_dir_all(root)
            .map_err(|e| Error::Io { path: root.to_path_buf(), source: e })?;
        Ok(Self { root: root.to_path_buf(), wall_times_ms: Vec::new() })
    }

    fn write(&self, name: &str, content: &str) -> Result<()> {
        let path = self.root.join(name);
        std::fs::write(&path, content).map_err(|e| Error::Io { path, source: e })
    }

    fn write_json<T: Serialize>(&self, name: &str, value: &T) -> Result<()> {
        self.write(name, &format!("{}\n", serde_json::to_string_pretty(value)?))
    }

    fn record_time(&mut self, label: impl Into<String>, elapsed_ms: u128) {
        self.wall_times_ms.push((label.into(), elapsed_ms));
    }

    /// Timestamps and wall times live here, outside the deterministic files.
    fn write_metadata(&self, command: &str) -> Result<()> {
        #[derive(Serialize)]
        struct Metadata<'a> {
            command: &'a str,
            created_unix_secs: u64,
            wall_times_ms: Vec<(String, u128)>,
        }
        let created_unix_secs = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        self.write_json(
            "metadata.json",
            &Metadata { command, created_unix_secs, wall_times_ms: self.wall_times_ms.clone() },
        )
    }
}

fn thread_pool(jobs: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))
}

/// One seed's training artifacts.
struct SeedRun {
    seed: u64,
    splits: Splits,
    history: TrainHistory,
    params: ModelParams,
    test_report: MetricsReport,
    elapsed_ms: u128,
}

fn run_seed(
    dataset: &Dataset,
    model: &ModelArgs,
    fairness: FairnessConfig,
    seed: u64,
) -> Result<SeedRun> {
    let splits = make_splits(dataset, model.labeled_count, seed)?;
    let init = ModelParams::init(
        model.model.into(),
        dataset.feature_dim(),
        model.hidden,
        model.layers,
        model.dropout,
        seed,
    )?;
    let config = model.train_config(seed, fairness);
    let started = Instant::now();
    let (trained, history) = train(dataset, &splits, init, &config)?;
    let elapsed_ms = started.elapsed().as_millis();
    let test_report =
        evaluate(&trained.params, dataset, &splits.test, model.threshold, model.self_loops)?;
    Ok(SeedRun { seed, splits, history, params: trained.params, test_report, elapsed_ms })
}

fn run_seeds(
    dataset: &Dataset,
    model: &ModelArgs,
    fairness: FairnessConfig,
    seeds: &[u64],
    jobs: usize,
) -> Result<Vec<SeedRun>> {
    let pool = thread_pool(jobs)?;
    pool.install(|| {
        use rayon::prelude::*;
        seeds.par_iter().map(|&seed| run_seed(dataset, model, fairness, seed)).collect()
    })
}

fn cmd_train(args: &TrainArgs) -> Result<()> {
    let seeds = parse_seeds(&args.seeds)?;
    let fairness = FairnessConfig::new(args.alpha, args.beta)?;
    let dataset = args.data.load()?;
    let mut out = OutputDir::create(&args.out)?;
    out.write_json("config.json", args)?;

    let runs = run_seeds(&dataset, &args.model, fairness, &seeds, args.jobs)?;
    for run in &runs {
        out.write(&format!("history_seed{}.jsonl", run.seed), &run.history.to_jsonl()?)?;
        out.write(&format!("splits_seed{}.json", run.seed), &run.splits.to_json()?)?;
        save_checkpoint(&run.params, &out.root.join(format!("checkpoint_seed{}.json", run.seed)))?;
        out.record_time(format!("train_seed{}", run.seed), run.elapsed_ms);
    }
    let reports: Vec<MetricsReport> = runs.iter().map(|r| r.test_report.clone()).collect();
    let result =
        ExperimentResult::new(args.model.method_name(&fairness), seeds.clone(), reports);
    write_result(std::slice::from_ref(&result), &out.root.join("result.csv"), ResultFormat::Csv)?;
    write_result(std::slice::from_ref(&result), &out.root.join("result.json"), ResultFormat::Json)?;
    out.write_metadata("train")?;
    println!("{}", ExperimentResult::csv_header());
    println!("{}", result.csv_row());
    Ok(())
}

fn cmd_eval(args: &EvalArgs) -> Result<()> {
    let dataset = args.data.load()?;
    let params = load_checkpoint(&args.checkpoint)?;
    let idx: Vec<usize> = match (&args.splits, args.split) {
        (Some(path), choice) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Error::Io { path: path.clone(), source: e })?;
            let splits = Splits::from_json(&text)?;
            match choice {
                SplitChoice::Train => splits.train,
                SplitChoice::Val => splits.val,
                SplitChoice::Test => splits.test,
                SplitChoice::Labeled => dataset.labeled.clone(),
            }
        }
        (None, SplitChoice::Labeled) | (None, SplitChoice::Test) => dataset.labeled.clone(),
        (None, _) => {
            return Err(Error::Config("--split train/val requires --splits".into()));
        }
    };
    let report = evaluate(&params, &dataset, &idx, args.threshold, args.self_loops)?;
    println!("{}", MetricsReport::csv_header());
    println!("{}", report.csv_row());
    if let Some(dir) = &args.out {
        let out = OutputDir::create(dir)?;
        out.write_json("metrics.json", &report)?;
        out.write(
            "metrics.csv",
            &format!("{}\n{}\n", MetricsReport::csv_header(), report.csv_row()),
        )?;
        out.write_metadata("eval")?;
    }
    Ok(())
}

#[derive(Serialize)]
struct HpoSummary {
    best_alpha: f64,
    best_beta: f64,
    best_score: f64,
    trials: usize,
    /// Best score seen up to each trial index (convergence curve).
    best_so_far: Vec<f64>,
}

fn cmd_hpo(args: &HpoArgs) -> Result<()> {
    let dataset = args.data.load()?;
    let space = SearchSpace { trials: args.trials, seed: args.seed, ..SearchSpace::default() };
    let mut out = OutputDir::create(&args.out)?;
    out.write_json("config.json", args)?;

    let model = args.model.clone();
    let seed = args.seed;
    let started = Instant::now();
    let pool = thread_pool(args.jobs)?;
    let outcome = pool.install(|| {
        search(&space, args.jobs, |_, alpha, beta| {
            let fairness = FairnessConfig::new(alpha, beta)?;
            let run = run_seed(&dataset, &model, fairness, seed)?;
            let best = &run.history.epochs[run.history.best_epoch];
            Ok((best.hybrid_score, Some(best.val_metrics.clone())))
        })
    })?;
    out.record_time("search", started.elapsed().as_millis());
    for trial in &outcome.trials {
        out.record_time(format!("trial{}", trial.index), trial.wall_time_ms as u128);
    }

    let mut log = String::new();
    for trial in &outcome.trials {
        log.push_str(&serde_json::to_string(trial)?);
        log.push('\n');
    }
    out.write("trials.jsonl", &log)?;
    out.write_json(
        "summary.json",
        &HpoSummary {
            best_alpha: outcome.best.0,
            best_beta: outcome.best.1,
            best_score: outcome.best_score,
            trials: outcome.trials.len(),
            best_so_far: outcome.best_so_far(),
        },
    )?;
    out.write_metadata("hpo")?;
    println!(
        "best (alpha, beta) = ({}, {}) with validation hybrid score {:.4}",
        outcome.best.0, outcome.best.1, outcome.best_score
    );
    Ok(())
}

fn cmd_synth(args: &SynthArgs) -> Result<()> {
    let cfg = SyntheticConfig::from_toml_file(&args.synthetic)?;
    let dataset = generate_synthetic(&cfg)?;
    let out = OutputDir::create(&args.out)?;
    out.write_json("config.json", &cfg)?;
    save_dataset(&dataset, &out.root.join("nodes.csv"), &out.root.join("edges.csv"))?;
    #[derive(Serialize)]
    struct SynthSummary {
        n: usize,
        feature_dim: usize,
        edges: usize,
        labeled: usize,
    }
    out.write_json(
        "summary.json",
        &SynthSummary {
            n: dataset.n,
            feature_dim: dataset.feature_dim(),
            edges: dataset.adjacency.nnz() / 2,
            labeled: dataset.labeled.len(),
        },
    )?;
    out.write_metadata("synth")?;
    println!(
        "wrote {} nodes and {} edges to {}",
        dataset.n,
        dataset.adjacency.nnz() / 2,
        args.out.display()
    );
    Ok(())
}

fn cmd_feasibility(args: &FeasibilityArgs) -> Result<()> {
    let rates = BaseRates::new(args.x, args.y)?;
    let cells = region_scan(&rates, args.resolution)?;
    let feasible = cells.iter().filter(|c| c.feasible).count();
    let measure = feasible as f64 / cells.len() as f64;

    let out = OutputDir::create(&args.out)?;
    out.write_json("config.json", args)?;
    let mut csv = String::from("tp_b,fp_b,feasible\n");
    for cell in &cells {
        csv.push_str(&format!("{},{},{}\n", cell.tp_b, cell.fp_b, cell.feasible as u8));
    }
    out.write("region.csv", &csv)?;
    #[derive(Serialize)]
    struct FeasibilitySummary {
        x: f64,
        y: f64,
        resolution: usize,
        measure: f64,
    }
    out.write_json(
        "summary.json",
        &FeasibilitySummary { x: args.x, y: args.y, resolution: args.resolution, measure },
    )?;
    out.write_metadata("feasibility")?;
    println!("feasible fraction of the (tp_b, fp_b) box: {measure}");
    Ok(())
}

fn cmd_sweep_labeled(args: &SweepArgs) -> Result<()> {
    let seeds = parse_seeds(&args.seeds)?;
    let proportions = parse_proportions(&args.proportions)?;
    let dataset = args.data.load()?;
    let mut out = OutputDir::create(&args.out)?;
    out.write_json("config.json", args)?;

    let quarter = dataset.n / 4;
    let capacity = dataset.n - 2 * quarter;
    let mut results: Vec<(f64, ExperimentResult)> = Vec::new();
    for &pct in &proportions {
        let labeled_count = ((pct / 100.0) * dataset.n as f64).round() as usize;
        if labeled_count == 0 || labeled_count > capacity {
            return Err(Error::Config(format!(
                "proportion {pct}% gives labeled_count {labeled_count}, outside 1..={capacity}"
            )));
        }
        let mut model = args.model.clone();
        model.labeled_count = labeled_count;
        for (alpha, beta) in [(0.0, 0.0), (args.alpha, args.beta)] {
            let fairness = FairnessConfig::new(alpha, beta)?;
            let runs = run_seeds(&dataset, &model, fairness, &seeds, args.jobs)?;
            for run in &runs {
                out.record_time(
                    format!("train_{}pct_{}_seed{}", pct, model.method_name(&fairness), run.seed),
                    run.elapsed_ms,
                );
            }
            let reports: Vec<MetricsReport> =
                runs.iter().map(|r| r.test_report.clone()).collect();
            results.push((
                pct,
                ExperimentResult::new(model.method_name(&fairness), seeds.clone(), reports),
            ));
        }
    }

    let mut csv = format!("proportion_pct,{}\n", ExperimentResult::csv_header());
    for (pct, result) in &results {
        csv.push_str(&format!("{pct},{}\n", result.csv_row()));
    }
    out.write("sweep.csv", &csv)?;
    #[derive(Serialize)]
    struct SweepRow<'a> {
        proportion_pct: f64,
        #[serde(flatten)]
        result: &'a ExperimentResult,
    }
    let rows: Vec<SweepRow> =
        results.iter().map(|(p, r)| SweepRow { proportion_pct: *p, result: r }).collect();
    out.write_json("sweep.json", &rows)?;
    out.write_metadata("sweep-labeled")?;
    print!("{csv}");
    Ok(())
}

/// Dispatches a parsed command.
pub fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Train(args) => cmd_train(args),
        Command::Eval(args) => cmd_eval(args),
        Command::Hpo(args) => cmd_hpo(args),
        Command::Synth(args) => cmd_synth(args),
        Command::Feasibility(args) => cmd_feasibility(args),
        Command::SweepLabeled(args) => cmd_sweep_labeled(args),
    }
}

/// Parses and runs an argv-style invocation; used by tests and examples.
pub fn run_from<I, T>(args: I) -> Result<()>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = Cli::try_parse_from(args)
        .map_err(|e| Error::Config(format!("argument parsing: {e}")))?;
    run(&cli)
}

/// Binary entry point: returns the process exit code.
pub fn main() -> i32 {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
