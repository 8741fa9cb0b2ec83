//! Experiment runner CLI: generate trees, train them over seeded multi-run
//! protocols, evaluate saved models, and export structure diagrams.
//!
//! Exit codes: 0 success, 1 usage/config error, 2 data or model error,
//! 3 divergence-dominated run set (more than half the runs aborted on
//! non-finite values).

use clap::{Args, Parser, Subcommand};
use neuraltree::data::{load_csv, load_idx, minmax_normalize, ColumnSelector, CsvSchema, CsvTask};
use neuraltree::dot::export_dot;
use neuraltree::experiment::{
    dataset_shape, run_benchmark, run_experiment, CsvTaskSpec, DatasetSpec, ExperimentConfig,
    NormalizationScope, Summary,
};
use neuraltree::metrics::MetricKind;
use neuraltree::model_io::{load_model, save_model};
use neuraltree::optim::OptimizerKind;
use neuraltree::train::{evaluate, TrainConfig};
use neuraltree::tree::{
    count_parameters, generate_tree, tree_size, validate, TaskKind, TreeGenConfig,
};
use neuraltree::Error;
use serde::Deserialize;
use std::path::PathBuf;
use std::process::ExitCode;

/// Default base for output directories when neither --out nor the config
/// file names one.
const OUT_ENV: &str = "NEURALTREE_OUT";

#[derive(Parser)]
#[command(
    name = "neuraltree",
    version,
    about = "Sparse neural trees trained by recursive backpropagation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a stochastic tree and write it as a model file.
    Generate(GenerateArgs),
    /// Run the multi-run train/evaluate protocol on one dataset.
    Train(TrainArgs),
    /// Evaluate a saved model on a dataset.
    Evaluate(EvaluateArgs),
    /// Emit the Graphviz structure of a saved model.
    ExportDot(ExportDotArgs),
    /// Train over a list of datasets and print one summary row per dataset.
    Benchmark(BenchmarkArgs),
}

#[derive(Args, Clone)]
struct GenArgsCommon {
    /// Maximum tree depth (root at depth 0).
    #[arg(long)]
    depth: Option<u32>,
    /// Maximum children per internal node.
    #[arg(long)]
    arity: Option<u32>,
    /// Probability that a child above the depth cap becomes a leaf.
    #[arg(long)]
    leaf_prob: Option<f64>,
    /// Node-count floor (regenerate until met).
    #[arg(long)]
    min_size: Option<usize>,
    /// Internal activation: sigmoid or relu.
    #[arg(long)]
    activation: Option<String>,
}

impl GenArgsCommon {
    fn apply(&self, cfg: &mut TreeGenConfig) -> Result<(), Error> {
        if let Some(d) = self.depth {
            cfg.depth_cap = d;
        }
        if let Some(a) = self.arity {
            cfg.arity_cap = a;
        }
        if let Some(p) = self.leaf_prob {
            cfg.leaf_prob = p;
        }
        if let Some(m) = self.min_size {
            cfg.min_size = Some(m);
        }
        if let Some(act) = &self.activation {
            cfg.internal_activation = match act.to_ascii_lowercase().as_str() {
                "sigmoid" => neuraltree::activation::ActivationKind::Sigmoid,
                "relu" => neuraltree::activation::ActivationKind::ReLU,
                other => {
                    return Err(Error::Config(format!(
                        "unknown activation '{other}' (expected sigmoid or relu)"
                    )))
                }
            };
        }
        Ok(())
    }
}

#[derive(Args, Clone)]
struct DataArgs {
    /// Dataset file: .csv, or an IDX images file when --labels is given.
    #[arg(long)]
    data: Option<PathBuf>,
    /// IDX labels file paired with --data.
    #[arg(long)]
    labels: Option<PathBuf>,
    /// Target column of a CSV: "last", an index, or a header name.
    #[arg(long, default_value = "last")]
    target: String,
    /// Task of a CSV dataset: classification or regression.
    #[arg(long)]
    task: Option<String>,
}

impl DataArgs {
    fn spec(&self) -> Result<Option<DatasetSpec>, Error> {
        let Some(path) = &self.data else {
            return Ok(None);
        };
        if let Some(labels) = &self.labels {
            return Err(Error::Config(format!(
                "IDX pairs need a pre-split test set; use a config file \
                 (images {}, labels {})",
                path.display(),
                labels.display()
            )));
        }
        let task = match self.task.as_deref() {
            Some("classification") | None => CsvTaskSpec::Classification,
            Some("regression") => CsvTaskSpec::Regression,
            Some(other) => {
                return Err(Error::Config(format!(
                    "unknown task '{other}' (expected classification or regression)"
                )))
            }
        };
        Ok(Some(DatasetSpec::Csv {
            path: path.clone(),
            target: self.target.clone(),
            task,
        }))
    }
}

#[derive(Args)]
struct GenerateArgs {
    /// Experiment config file supplying the generation section.
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    gen: GenArgsCommon,
    #[command(flatten)]
    data: DataArgs,
    /// Task when no dataset is given: "regression" or "classification:N".
    #[arg(long)]
    gen_task: Option<String>,
    /// Input dimension when no dataset is given.
    #[arg(long)]
    input_dim: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output model path.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    /// Experiment config file (JSON with the ExperimentConfig fields).
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    gen: GenArgsCommon,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    runs: Option<usize>,
    #[arg(long)]
    jobs: Option<usize>,
    /// gd, mgd, nag, adagrad, rmsprop or adam.
    #[arg(long)]
    optimizer: Option<String>,
    /// Learning rate.
    #[arg(long)]
    eta: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    /// Mini-batch size (omit for online training).
    #[arg(long)]
    batch_size: Option<usize>,
    /// Output directory (default: $NEURALTREE_OUT/NAME or runs/NAME).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    model: PathBuf,
    #[command(flatten)]
    data: DataArgs,
}

#[derive(Args)]
struct ExportDotArgs {
    #[arg(long)]
    model: PathBuf,
    /// Output path (stdout when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BenchmarkArgs {
    /// Benchmark config: ExperimentConfig fields plus a "datasets" list.
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    runs: Option<usize>,
    #[arg(long)]
    jobs: Option<usize>,
    #[arg(long)]
    optimizer: Option<String>,
    #[arg(long)]
    eta: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn exit_code_for(err: &Error) -> u8 {
    match err {
        Error::Config(_) => 1,
        Error::Divergence { .. } => 3,
        _ => 2,
    }
}

fn read_experiment_config(path: &PathBuf) -> Result<ExperimentConfig, Error> {
    let text = std::fs::read_to_string(path)?;
    serde_json::from_str(&text)
        .map_err(|e| Error::Config(format!("config {}: {e}", path.display())))
}

fn default_out_dir(dataset_name: &str) -> PathBuf {
    match std::env::var_os(OUT_ENV) {
        Some(base) => PathBuf::from(base).join(dataset_name),
        None => PathBuf::from("runs").join(dataset_name),
    }
}

fn parse_optimizer(s: &str) -> Result<OptimizerKind, Error> {
    s.parse()
}

fn cmd_generate(args: &GenerateArgs) -> Result<(), Error> {
    let mut gen_cfg = match &args.config {
        Some(path) => read_experiment_config(path)?.gen,
        None => TreeGenConfig::default(),
    };
    args.gen.apply(&mut gen_cfg)?;
    if let Some(seed) = args.seed {
        gen_cfg.rng_seed = seed;
    }

    let (task, input_dim) = if let Some(spec) = args.data.spec()? {
        dataset_shape::<f64>(&spec, gen_cfg.rng_seed)?
    } else if let (Some(task), Some(dim)) = (&args.gen_task, args.input_dim) {
        let task = match task.as_str() {
            "regression" => TaskKind::Regression,
            t => match t
                .strip_prefix("classification:")
                .and_then(|r| r.parse().ok())
            {
                Some(classes) => TaskKind::Classification { classes },
                None => {
                    return Err(Error::Config(format!(
                        "unknown task '{t}' (expected regression or classification:<r>)"
                    )))
                }
            },
        };
        (task, dim)
    } else {
        return Err(Error::Config(
            "generate needs either --data or both --gen-task and --input-dim".into(),
        ));
    };

    let tree = generate_tree::<f64>(&gen_cfg, task, input_dim)?;
    debug_assert!(validate(&tree).is_empty());
    save_model(&tree, &args.out)?;
    let counts = count_parameters(&tree);
    println!(
        "wrote {} ({} nodes, {} edges + {} biases = {} parameters)",
        args.out.display(),
        tree_size(&tree),
        counts.edges,
        counts.biases,
        counts.total
    );
    Ok(())
}

fn apply_train_overrides(cfg: &mut ExperimentConfig, args: &TrainArgs) -> Result<(), Error> {
    if let Some(spec) = args.data.spec()? {
        cfg.dataset = spec;
    }
    args.gen.apply(&mut cfg.gen)?;
    if let Some(seed) = args.seed {
        cfg.master_seed = seed;
    }
    if let Some(runs) = args.runs {
        cfg.runs = runs;
    }
    if let Some(jobs) = args.jobs {
        cfg.jobs = jobs;
    }
    if let Some(opt) = &args.optimizer {
        cfg.train.optimizer = parse_optimizer(opt)?;
    }
    if let Some(eta) = args.eta {
        cfg.train.hyper.eta = eta;
    }
    if let Some(epochs) = args.epochs {
        cfg.train.epochs = epochs;
    }
    if let Some(batch) = args.batch_size {
        cfg.train.mode = neuraltree::train::TrainMode::MiniBatch { batch_size: batch };
    }
    if let Some(out) = &args.out {
        cfg.output_dir = Some(out.clone());
    }
    Ok(())
}

fn cmd_train(args: &TrainArgs) -> Result<(), Error> {
    let mut cfg = match &args.config {
        Some(path) => read_experiment_config(path)?,
        None => {
            let Some(spec) = args.data.spec()? else {
                return Err(Error::Config("train needs --config or --data".into()));
            };
            ExperimentConfig {
                dataset: spec,
                gen: TreeGenConfig::default(),
                train: TrainConfig::default(),
                runs: 1,
                master_seed: 0,
                output_dir: None,
                jobs: 1,
                train_fraction: 0.8,
                normalization: NormalizationScope::FullDataset,
            }
        }
    };
    apply_train_overrides(&mut cfg, args)?;
    if cfg.output_dir.is_none() {
        cfg.output_dir = Some(default_out_dir(&cfg.dataset.name()));
    }

    let outcome = run_experiment::<f64>(&cfg)?;
    print!("{}", outcome.summary.human_block());
    println!(
        "outputs under {}",
        cfg.output_dir.as_ref().unwrap().display()
    );
    if outcome.summary.diverged_runs * 2 > outcome.summary.runs {
        return Err(Error::Divergence { index: 0 });
    }
    Ok(())
}

fn cmd_evaluate(args: &EvaluateArgs) -> Result<(), Error> {
    let tree = load_model::<f64>(&args.model)?;
    let Some(path) = &args.data.data else {
        return Err(Error::Config("evaluate needs --data".into()));
    };
    let dataset = if let Some(labels) = &args.data.labels {
        load_idx::<f64>(path, labels)?
    } else {
        let task = match (&args.data.task, tree.task()) {
            (Some(t), _) if t == "regression" => CsvTask::Regression,
            (Some(t), _) if t == "classification" => CsvTask::Classification,
            (Some(t), _) => {
                return Err(Error::Config(format!("unknown task '{t}'")));
            }
            (None, TaskKind::Regression) => CsvTask::Regression,
            (None, TaskKind::Classification { .. }) => CsvTask::Classification,
        };
        let selector = match args.data.target.as_str() {
            "last" => ColumnSelector::Last,
            t => match t.parse::<usize>() {
                Ok(i) => ColumnSelector::Index(i),
                Err(_) => ColumnSelector::Name(t.to_string()),
            },
        };
        minmax_normalize(load_csv::<f64>(
            path,
            &CsvSchema {
                target_column: selector,
                task,
            },
        )?)
    };

    let eval = evaluate(&tree, &dataset)?;
    println!("{}: {}", eval.loss.kind, eval.loss.value);
    println!("{}: {}", eval.metric.kind, eval.metric.value);
    if eval.metric.kind == MetricKind::Accuracy {
        if let Some(rates) = &eval.per_class {
            for (c, r) in rates.iter().enumerate() {
                let fmt = |v: Option<f64>| match v {
                    Some(v) => format!("{v:.4}"),
                    None => "undefined".into(),
                };
                println!("class {c}: tpr {} fpr {}", fmt(r.tpr), fmt(r.fpr));
            }
        }
    }
    Ok(())
}

fn cmd_export_dot(args: &ExportDotArgs) -> Result<(), Error> {
    let tree = load_model::<f64>(&args.model)?;
    let dot = export_dot(&tree);
    match &args.out {
        Some(path) => std::fs::write(path, dot)?,
        None => print!("{dot}"),
    }
    Ok(())
}

#[derive(Deserialize)]
struct BenchmarkFile {
    datasets: Vec<DatasetSpec>,
    #[serde(default)]
    gen: TreeGenConfig,
    #[serde(default)]
    train: TrainConfig,
    runs: usize,
    master_seed: u64,
    #[serde(default)]
    output_dir: Option<PathBuf>,
    #[serde(default = "one")]
    jobs: usize,
    #[serde(default = "default_fraction")]
    train_fraction: f64,
    #[serde(default)]
    normalization: NormalizationScope,
}

fn one() -> usize {
    1
}

fn default_fraction() -> f64 {
    0.8
}

fn cmd_benchmark(args: &BenchmarkArgs) -> Result<(), Error> {
    let text = std::fs::read_to_string(&args.config)?;
    let file: BenchmarkFile = serde_json::from_str(&text)
        .map_err(|e| Error::Config(format!("config {}: {e}", args.config.display())))?;
    if file.datasets.is_empty() {
        return Err(Error::Config("benchmark needs at least one dataset".into()));
    }
    let mut base = ExperimentConfig {
        dataset: file.datasets[0].clone(),
        gen: file.gen,
        train: file.train,
        runs: file.runs,
        master_seed: file.master_seed,
        output_dir: file.output_dir,
        jobs: file.jobs,
        train_fraction: file.train_fraction,
        normalization: file.normalization,
    };
    if let Some(seed) = args.seed {
        base.master_seed = seed;
    }
    if let Some(runs) = args.runs {
        base.runs = runs;
    }
    if let Some(jobs) = args.jobs {
        base.jobs = jobs;
    }
    if let Some(opt) = &args.optimizer {
        base.train.optimizer = parse_optimizer(opt)?;
    }
    if let Some(eta) = args.eta {
        base.train.hyper.eta = eta;
    }
    if let Some(epochs) = args.epochs {
        base.train.epochs = epochs;
    }
    if let Some(out) = &args.out {
        base.output_dir = Some(out.clone());
    }
    if base.output_dir.is_none() {
        base.output_dir = Some(default_out_dir("benchmark"));
    }

    let rows = run_benchmark::<f64>(&base, &file.datasets)?;
    println!("{}", Summary::CSV_HEADER);
    for row in &rows {
        println!("{}", row.csv_row());
    }
    if let Some(dir) = &base.output_dir {
        let mut csv = String::from(Summary::CSV_HEADER);
        csv.push('\n');
        for row in &rows {
            csv.push_str(&row.csv_row());
            csv.push('\n');
        }
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("benchmark_summary.csv"), csv)?;
    }
    let diverged: usize = rows.iter().map(|r| r.diverged_runs).sum();
    let total: usize = rows.iter().map(|r| r.runs).sum();
    if diverged * 2 > total {
        return Err(Error::Divergence { index: 0 });
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // clap treats --help/--version as errors that print to stdout
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match &cli.command {
        Command::Generate(args) => cmd_generate(args),
        Command::Train(args) => cmd_train(args),
        Command::Evaluate(args) => cmd_evaluate(args),
        Command::ExportDot(args) => cmd_export_dot(args),
        Command::Benchmark(args) => cmd_benchmark(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code_for(&e))
        }
    }
}
