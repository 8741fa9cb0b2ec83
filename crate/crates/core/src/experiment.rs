//! Multi-run experiment orchestration: a protocol of N
//! independent runs, each with its own derived seed, fresh tree, fresh
//! train/test split, and full training, aggregated into a summary row.
//!
//! Seeds: `run_seed = mix(master_seed, run)`, from which the generation,
//! split, and shuffle streams are derived. Adding runs never changes the
//! streams of earlier runs, and rerunning a config reproduces every output
//! file byte for byte.

use crate::data::{self, Dataset};
use crate::error::{Error, Result};
use crate::model_io;
use crate::optim::OptimizerKind;
use crate::rng::mix_seed;
use crate::scalar::Scalar;
use crate::train::{self, TrainConfig, CONVERGENCE_HEADER};
use crate::tree::{count_parameters, generate_tree, tree_size, TaskKind, TreeGenConfig};
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::{Path, PathBuf};

/// Where a dataset comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum DatasetSpec {
    /// Delimited text file; `target` picks the label column ("last", a
    /// 0-based index, or a header name).
    Csv {
        path: PathBuf,
        #[serde(default = "default_target")]
        target: String,
        task: CsvTaskSpec,
    },
    /// Synthetic Friedman #1 regression data.
    Friedman {
        n: usize,
        #[serde(default)]
        noise_seed: u64,
    },
    /// Pre-split IDX image/label pairs (pixels divided by 255 at load).
    Idx {
        images: PathBuf,
        labels: PathBuf,
        test_images: PathBuf,
        test_labels: PathBuf,
        /// Optional seeded subset of the training pair.
        #[serde(default)]
        subset: Option<usize>,
    },
}

fn default_target() -> String {
    "last".into()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CsvTaskSpec {
    Classification,
    Regression,
}

impl DatasetSpec {
    pub fn name(&self) -> String {
        match self {
            DatasetSpec::Csv { path, .. } => path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "csv".into()),
            DatasetSpec::Friedman { .. } => "friedman".into(),
            DatasetSpec::Idx { .. } => "idx".into(),
        }
    }
}

/// When feature scaling statistics are computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum NormalizationScope {
    /// Normalize the full dataset, then split (the replication default).
    #[default]
    FullDataset,
    /// Split first, then scale both sides with training-set statistics.
    TrainOnly,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub dataset: DatasetSpec,
    #[serde(default)]
    pub gen: TreeGenConfig,
    #[serde(default)]
    pub train: TrainConfig,
    pub runs: usize,
    pub master_seed: u64,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default = "default_jobs")]
    pub jobs: usize,
    #[serde(default = "default_train_fraction")]
    pub train_fraction: f64,
    #[serde(default)]
    pub normalization: NormalizationScope,
}

fn default_jobs() -> usize {
    1
}

fn default_train_fraction() -> f64 {
    0.8
}

/// Outcome of a single run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunResult<S: Scalar> {
    pub run: usize,
    pub seed: u64,
    pub test_loss: f64,
    pub test_metric: f64,
    pub params: usize,
    pub tree_size: usize,
    pub best_epoch: usize,
    pub stopped_epoch: usize,
    pub diverged: bool,
    pub report: train::TrainReport<S>,
}

/// Aggregate over all runs (Table-style row: mean/std of the test metric,
/// mean parameter count, mean tree size).
#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub dataset: String,
    pub optimizer: OptimizerKind,
    pub runs: usize,
    pub diverged_runs: usize,
    pub mean_metric: f64,
    pub std_metric: f64,
    pub mean_loss: f64,
    pub mean_params: f64,
    pub mean_tree_size: f64,
    pub mean_best_epoch: f64,
}

#[derive(Debug)]
pub struct ExperimentOutcome<S: Scalar> {
    pub runs: Vec<RunResult<S>>,
    pub summary: Summary,
}

type RunSlot<S> = Option<Result<(RunResult<S>, crate::tree::NeuralTree<S>)>>;

enum LoadedData<S: Scalar> {
    /// Needs a per-run shuffle split (optionally normalizing after).
    Whole(Dataset<S>),
    /// Already split (IDX pairs).
    Presplit(Box<(Dataset<S>, Dataset<S>)>),
}

fn load_dataset<S: Scalar>(
    spec: &DatasetSpec,
    scope: NormalizationScope,
    master_seed: u64,
) -> Result<LoadedData<S>> {
    match spec {
        DatasetSpec::Csv { path, target, task } => {
            let selector = match target.as_str() {
                "last" => data::ColumnSelector::Last,
                t => match t.parse::<usize>() {
                    Ok(i) => data::ColumnSelector::Index(i),
                    Err(_) => data::ColumnSelector::Name(t.to_string()),
                },
            };
            let schema = data::CsvSchema {
                target_column: selector,
                task: match task {
                    CsvTaskSpec::Classification => data::CsvTask::Classification,
                    CsvTaskSpec::Regression => data::CsvTask::Regression,
                },
            };
            let ds = data::load_csv::<S>(path, &schema)?;
            Ok(LoadedData::Whole(match scope {
                NormalizationScope::FullDataset => data::minmax_normalize(ds),
                NormalizationScope::TrainOnly => ds,
            }))
        }
        DatasetSpec::Friedman { n, noise_seed } => {
            Ok(LoadedData::Whole(data::generate_friedman(*n, *noise_seed)?))
        }
        DatasetSpec::Idx {
            images,
            labels,
            test_images,
            test_labels,
            subset,
        } => {
            let mut train = data::load_idx::<S>(images, labels)?;
            let test = data::load_idx::<S>(test_images, test_labels)?;
            if let Some(k) = subset {
                if *k == 0 || *k > train.len() {
                    return Err(Error::Config(format!(
                        "subset {k} outside 1..={}",
                        train.len()
                    )));
                }
                let mut perm: Vec<usize> = (0..train.len()).collect();
                use rand::seq::SliceRandom;
                perm.shuffle(&mut crate::rng::seeded_rng(mix_seed(master_seed, 0xDA7A)));
                train = train.subset(&perm[..*k]);
            }
            Ok(LoadedData::Presplit(Box::new((train, test))))
        }
    }
}

fn run_once<S: Scalar>(
    cfg: &ExperimentConfig,
    data: &LoadedData<S>,
    run: usize,
) -> Result<(RunResult<S>, crate::tree::NeuralTree<S>)> {
    let run_seed = mix_seed(cfg.master_seed, run as u64);
    let (train_set, eval_set) = match data {
        LoadedData::Whole(ds) => {
            let (tr, te) = data::shuffle_split(ds, cfg.train_fraction, mix_seed(run_seed, 2))?;
            match cfg.normalization {
                NormalizationScope::FullDataset => (tr, te),
                NormalizationScope::TrainOnly => data::minmax_normalize_pair(tr, te),
            }
        }
        LoadedData::Presplit(pair) => (pair.0.clone(), pair.1.clone()),
    };

    let gen_cfg = TreeGenConfig {
        rng_seed: mix_seed(run_seed, 1),
        ..cfg.gen.clone()
    };
    let task = train_set.task();
    let tree = generate_tree::<S>(&gen_cfg, task, train_set.dim())?;

    let train_cfg = TrainConfig {
        shuffle_seed: mix_seed(run_seed, 3),
        ..cfg.train.clone()
    };
    let (trained, report) = train::train(&tree, &train_set, &eval_set, &train_cfg)?;
    let eval = train::evaluate(&trained, &eval_set)?;
    let counts = count_parameters(&trained);
    let result = RunResult {
        run,
        seed: run_seed,
        test_loss: eval.loss.value.to_f64(),
        test_metric: eval.metric.value.to_f64(),
        params: counts.total,
        tree_size: tree_size(&trained),
        best_epoch: report.best_epoch,
        stopped_epoch: report.stopped_epoch,
        diverged: report.diverged.is_some(),
        report,
    };
    Ok((result, trained))
}

fn summarize<S: Scalar>(
    dataset: String,
    optimizer: OptimizerKind,
    runs: &[RunResult<S>],
) -> Summary {
    let n = runs.len();
    let mean = |f: &dyn Fn(&RunResult<S>) -> f64| -> f64 {
        runs.iter().map(f).sum::<f64>() / n as f64
    };
    let mean_metric = mean(&|r| r.test_metric);
    let var = if n > 1 {
        runs.iter()
            .map(|r| (r.test_metric - mean_metric).powi(2))
            .sum::<f64>()
            / (n - 1) as f64
    } else {
        0.0
    };
    Summary {
        dataset,
        optimizer,
        runs: n,
        diverged_runs: runs.iter().filter(|r| r.diverged).count(),
        mean_metric,
        std_metric: var.sqrt(),
        mean_loss: mean(&|r| r.test_loss),
        mean_params: mean(&|r| r.params as f64),
        mean_tree_size: mean(&|r| r.tree_size as f64),
        mean_best_epoch: mean(&|r| r.best_epoch as f64),
    }
}

impl Summary {
    pub const CSV_HEADER: &'static str = "dataset,optimizer,runs,diverged_runs,mean_metric,\
                                          std_metric,mean_loss,mean_params,mean_tree_size,\
                                          mean_best_epoch";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{}",
            self.dataset,
            self.optimizer.name(),
            self.runs,
            self.diverged_runs,
            self.mean_metric,
            self.std_metric,
            self.mean_loss,
            self.mean_params,
            self.mean_tree_size,
            self.mean_best_epoch
        )
    }

    pub fn human_block(&self) -> String {
        format!(
            "dataset:        {}\noptimizer:      {}\nruns:           {} ({} diverged)\n\
             test metric:    {:.6} +/- {:.6}\ntest loss:      {:.6}\n\
             mean params:    {:.1}\nmean tree size: {:.1}\nmean best epoch:{:.1}\n",
            self.dataset,
            self.optimizer.name(),
            self.runs,
            self.diverged_runs,
            self.mean_metric,
            self.std_metric,
            self.mean_loss,
            self.mean_params,
            self.mean_tree_size,
            self.mean_best_epoch
        )
    }
}

/// Runs the full multi-run protocol. When `cfg.output_dir` is set, writes
/// `convergence.csv`, `summary.csv`, `summary.txt` and `models/run_NNN.json`
/// under it; all file contents are a pure function of the config.
pub fn run_experiment<S: Scalar>(cfg: &ExperimentConfig) -> Result<ExperimentOutcome<S>> {
    if cfg.runs == 0 {
        return Err(Error::Config("runs must be >= 1".into()));
    }
    if cfg.jobs == 0 {
        return Err(Error::Config("jobs must be >= 1".into()));
    }
    let data = load_dataset::<S>(&cfg.dataset, cfg.normalization, cfg.master_seed)?;

    let mut slots: Vec<RunSlot<S>> = (0..cfg.runs).map(|_| None).collect();
    if cfg.jobs == 1 {
        for (run, slot) in slots.iter_mut().enumerate() {
            *slot = Some(run_once(cfg, &data, run));
        }
    } else {
        let next = std::sync::atomic::AtomicUsize::new(0);
        let slot_refs: Vec<_> = slots.iter_mut().collect();
        let slot_cell = std::sync::Mutex::new(slot_refs);
        std::thread::scope(|scope| {
            for _ in 0..cfg.jobs.min(cfg.runs) {
                scope.spawn(|| loop {
                    let run = next.fetch_add(1, std::sync::atomic::Ordering::SeqCst);
                    if run >= cfg.runs {
                        break;
                    }
                    let out = run_once(cfg, &data, run);
                    let mut slots = slot_cell.lock().unwrap();
                    *slots[run] = Some(out);
                });
            }
        });
    }

    let mut runs = Vec::with_capacity(cfg.runs);
    let mut trees = Vec::with_capacity(cfg.runs);
    for slot in slots {
        let (result, tree) = slot.expect("all runs executed")?;
        runs.push(result);
        trees.push(tree);
    }

    let summary = summarize(cfg.dataset.name(), cfg.train.optimizer, &runs);

    if let Some(dir) = &cfg.output_dir {
        write_outputs(dir, &runs, &trees, &summary)?;
    }
    Ok(ExperimentOutcome { runs, summary })
}

fn write_outputs<S: Scalar>(
    dir: &Path,
    runs: &[RunResult<S>],
    trees: &[crate::tree::NeuralTree<S>],
    summary: &Summary,
) -> Result<()> {
    std::fs::create_dir_all(dir.join("models"))?;
    let mut conv = Vec::new();
    writeln!(conv, "{CONVERGENCE_HEADER}")?;
    for r in runs {
        train::write_convergence_rows(&mut conv, r.run, &r.report.per_epoch)?;
    }
    std::fs::write(dir.join("convergence.csv"), conv)?;
    let mut summary_csv = String::new();
    summary_csv.push_str(Summary::CSV_HEADER);
    summary_csv.push('\n');
    summary_csv.push_str(&summary.csv_row());
    summary_csv.push('\n');
    std::fs::write(dir.join("summary.csv"), summary_csv)?;
    std::fs::write(dir.join("summary.txt"), summary.human_block())?;
    for (r, tree) in runs.iter().zip(trees) {
        model_io::save_model(tree, dir.join("models").join(format!("run_{:03}.json", r.run)))?;
    }
    Ok(())
}

/// Trains one experiment per dataset, writing each one's outputs into a
/// subdirectory, and returns the summary rows in dataset order.
pub fn run_benchmark<S: Scalar>(
    base: &ExperimentConfig,
    datasets: &[DatasetSpec],
) -> Result<Vec<Summary>> {
    let mut rows = Vec::with_capacity(datasets.len());
    for spec in datasets {
        let sub = ExperimentConfig {
            dataset: spec.clone(),
            output_dir: base
                .output_dir
                .as_ref()
                .map(|d| d.join(spec.name())),
            ..base.clone()
        };
        let outcome = run_experiment::<S>(&sub)?;
        rows.push(outcome.summary);
    }
    Ok(rows)
}

/// A task descriptor is needed to generate a model without data; this reads
/// the dataset only to learn its dimensions and task.
pub fn dataset_shape<S: Scalar>(
    spec: &DatasetSpec,
    master_seed: u64,
) -> Result<(TaskKind, usize)> {
    Ok(match load_dataset::<S>(spec, NormalizationScope::FullDataset, master_seed)? {
        LoadedData::Whole(ds) => (ds.task(), ds.dim()),
        LoadedData::Presplit(pair) => (pair.0.task(), pair.0.dim()),
    })
}
