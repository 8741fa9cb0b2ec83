//! The training loop: seeded shuffling, online and mini-batch updates,
//! early stopping with best-snapshot restoration.
//!
//! Per-epoch bookkeeping follows the online protocol: the `train_*` columns
//! are running averages accumulated example by example as the weights move
//! (one forward pass per example, which is also the gradient pass for every
//! rule except NAG), while the `eval_*` columns are measured on the eval set
//! after the epoch finishes. NAG evaluates its gradient at the lookahead
//! point, so it spends one extra forward pass per example to log the loss at
//! the current weights.

use crate::backprop::{
    compute_deltas_into, compute_gradients_into, DeltaMap, GradientVector, Target,
};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::forward::{forward_into, ForwardTrace, Prediction};
use crate::metrics::{self, ClassRates, MetricKind, MetricValue};
use crate::optim::{HyperParams, OptimizerKind, OptimizerState};
use crate::scalar::Scalar;
use crate::tree::{NeuralTree, TaskKind};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::time::Instant;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrainMode {
    Online,
    MiniBatch { batch_size: usize },
}

/// Which split's loss early stopping watches.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Monitor {
    TestError,
    TrainError,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EarlyStopping {
    pub patience: usize,
    pub monitor: Monitor,
}

impl Default for EarlyStopping {
    fn default() -> Self {
        EarlyStopping {
            patience: 50,
            monitor: Monitor::TestError,
        }
    }
}

/// Loss used for monitoring and reporting. `None` in [`TrainConfig`] selects
/// the task default: error rate for classification, MSE for regression.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossKind {
    ErrorRate,
    Mse,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub optimizer: OptimizerKind,
    pub hyper: HyperParams,
    pub epochs: usize,
    pub mode: TrainMode,
    pub early_stopping: Option<EarlyStopping>,
    pub shuffle_seed: u64,
    #[serde(default)]
    pub loss: Option<LossKind>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            optimizer: OptimizerKind::Rmsprop,
            hyper: HyperParams::default(),
            epochs: 500,
            mode: TrainMode::Online,
            early_stopping: Some(EarlyStopping::default()),
            shuffle_seed: 0,
            loss: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord<S: Scalar> {
    /// 1-based epoch number.
    pub epoch: usize,
    pub train_loss: S,
    pub eval_loss: S,
    pub train_metric: S,
    pub eval_metric: S,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DivergenceInfo {
    /// Epoch (1-based) whose updates produced a non-finite value.
    pub epoch: usize,
    pub param_index: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport<S: Scalar> {
    pub per_epoch: Vec<EpochRecord<S>>,
    /// Epoch with the best monitored loss; 0 when no epoch completed.
    pub best_epoch: usize,
    /// Last completed epoch.
    pub stopped_epoch: usize,
    pub final_params_restored: bool,
    pub wall_time_secs: f64,
    /// Set when a run was aborted by a non-finite value; the returned tree
    /// holds the best snapshot (or the last epoch-boundary weights).
    pub diverged: Option<DivergenceInfo>,
    pub optimizer_steps: u64,
    pub train_forward_passes: u64,
    pub eval_forward_passes: u64,
}

/// Outcome of [`evaluate`] on one dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation<S: Scalar> {
    pub loss: MetricValue<S>,
    pub metric: MetricValue<S>,
    /// One-vs-rest (tpr, fpr) per class; classification only.
    pub per_class: Option<Vec<ClassRates<S>>>,
}

fn default_loss(task: TaskKind) -> LossKind {
    if task.is_classification() {
        LossKind::ErrorRate
    } else {
        LossKind::Mse
    }
}

fn check_compat<S: Scalar>(tree: &NeuralTree<S>, data: &Dataset<S>) -> Result<()> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if data.dim() != tree.input_dim() {
        return Err(Error::Dimension {
            expected: tree.input_dim(),
            got: data.dim(),
        });
    }
    match (tree.task(), data.task()) {
        (TaskKind::Regression, TaskKind::Regression) => Ok(()),
        (
            TaskKind::Classification { classes: a },
            TaskKind::Classification { classes: b },
        ) if a == b => Ok(()),
        (t, d) => Err(Error::TaskMismatch(format!(
            "tree task {t:?} does not match dataset task {d:?}"
        ))),
    }
}

/// Sum of squared deviations from the mean (for r² denominators); `None`
/// for classification targets or degenerate (constant / single-row) sets.
fn squared_deviation<S: Scalar>(data: &Dataset<S>) -> Option<S> {
    let targets = data.real_targets()?;
    if targets.len() < 2 {
        return None;
    }
    let n = S::from_f64(targets.len() as f64);
    let mean = targets.iter().copied().sum::<S>() / n;
    let sst = targets.iter().map(|&t| (t - mean) * (t - mean)).sum::<S>();
    (sst > S::zero()).then_some(sst)
}

/// Per-example loss/metric accumulator shared by the running (train) and
/// post-epoch (eval) measurements so both produce bit-identical numbers.
struct LossAccum<S: Scalar> {
    loss_kind: LossKind,
    wrong: usize,
    sum_sq: S,
    count: usize,
    sst: Option<S>,
}

impl<S: Scalar> LossAccum<S> {
    fn new(loss_kind: LossKind, sst: Option<S>) -> Self {
        LossAccum {
            loss_kind,
            wrong: 0,
            sum_sq: S::zero(),
            count: 0,
            sst,
        }
    }

    fn push(&mut self, prediction: &Prediction<S>, target: Target<S>) {
        self.count += 1;
        match (prediction, target) {
            (Prediction::Classification { class, scores }, Target::Class(t)) => {
                if *class != t {
                    self.wrong += 1;
                }
                if self.loss_kind == LossKind::Mse {
                    for (slot, &s) in scores.iter().enumerate() {
                        let y = if slot == t { S::one() } else { S::zero() };
                        let r = s - y;
                        self.sum_sq += r * r;
                    }
                }
            }
            (Prediction::Regression { value }, Target::Real(y)) => {
                let r = *value - y;
                self.sum_sq += r * r;
            }
            _ => unreachable!("compatibility checked up front"),
        }
    }

    fn loss(&self) -> S {
        let n = S::from_f64(self.count as f64);
        match self.loss_kind {
            LossKind::ErrorRate => S::from_f64(self.wrong as f64 / self.count as f64),
            LossKind::Mse => self.sum_sq / n,
        }
    }

    /// Accuracy for classification, r² for regression (NaN when undefined).
    fn metric(&self, classification: bool) -> S {
        if classification {
            S::one() - S::from_f64(self.wrong as f64 / self.count as f64)
        } else {
            match self.sst {
                Some(sst) => S::one() - self.sum_sq / sst,
                None => S::nan(),
            }
        }
    }
}

fn eval_pass<S: Scalar>(
    tree: &NeuralTree<S>,
    data: &Dataset<S>,
    loss_kind: LossKind,
    trace: &mut ForwardTrace<S>,
) -> Result<(S, S)> {
    // For eval, MSE on a regression set must be accumulated over squared
    // residuals exactly like the running accumulator does.
    let mut acc = LossAccum::new(loss_kind, squared_deviation(data));
    for i in 0..data.len() {
        forward_into(tree, data.row(i), trace)?;
        acc.push(&trace.prediction, data.target(i));
    }
    Ok((acc.loss(), acc.metric(tree.task().is_classification())))
}

/// Runs the configured number of epochs over the training set, measuring the
/// eval set after each epoch, and returns the trained tree plus the full
/// report. With early stopping configured, the returned tree carries the
/// parameters of the best monitored epoch.
pub fn train<S: Scalar>(
    tree: &NeuralTree<S>,
    train_set: &Dataset<S>,
    eval_set: &Dataset<S>,
    cfg: &TrainConfig,
) -> Result<(NeuralTree<S>, TrainReport<S>)> {
    check_compat(tree, train_set)?;
    check_compat(tree, eval_set)?;
    cfg.hyper.validate()?;
    let batch_size = match cfg.mode {
        TrainMode::Online => 1,
        TrainMode::MiniBatch { batch_size } => {
            if batch_size == 0 {
                return Err(Error::Config("batch_size must be >= 1".into()));
            }
            batch_size
        }
    };
    if let Some(es) = &cfg.early_stopping {
        if es.patience == 0 {
            return Err(Error::Config("patience must be >= 1".into()));
        }
    }
    let loss_kind = cfg.loss.unwrap_or_else(|| default_loss(tree.task()));
    if loss_kind == LossKind::ErrorRate && !tree.task().is_classification() {
        return Err(Error::Config(
            "error-rate loss requires a classification task".into(),
        ));
    }

    let start = Instant::now();
    let mut tree = tree.clone();
    let mut state = OptimizerState::<S>::new(cfg.optimizer, tree.param_count());
    let mut shuffle_rng = crate::rng::seeded_rng(cfg.shuffle_seed);
    let nag = cfg.optimizer == OptimizerKind::Nag;
    let train_sst = squared_deviation(train_set);

    let mut report = TrainReport {
        per_epoch: Vec::with_capacity(cfg.epochs),
        best_epoch: 0,
        stopped_epoch: 0,
        final_params_restored: false,
        wall_time_secs: 0.0,
        diverged: None,
        optimizer_steps: 0,
        train_forward_passes: 0,
        eval_forward_passes: 0,
    };

    let mut indices: Vec<usize> = (0..train_set.len()).collect();
    let mut trace = ForwardTrace::new();
    let mut deltas = DeltaMap::default();
    let mut grads = GradientVector::default();
    let mut batch_grads: Vec<S> = vec![S::zero(); tree.param_count()];
    let mut saved_weights: Vec<S> = Vec::new();
    let mut epoch_start_weights: Vec<S> = tree.weights().to_vec();
    let mut best_snapshot: Option<Vec<S>> = None;
    let mut best_value = S::infinity();

    'epochs: for epoch in 1..=cfg.epochs {
        epoch_start_weights.copy_from_slice(tree.weights());
        indices.shuffle(&mut shuffle_rng);
        let mut running = LossAccum::new(loss_kind, train_sst);

        let mut batch_start = 0;
        while batch_start < indices.len() {
            let batch = &indices[batch_start..(batch_start + batch_size).min(indices.len())];
            batch_start += batch.len();

            // NAG logs the loss at the current weights before the gradient
            // pass moves to the lookahead point.
            if nag {
                for &i in batch {
                    match forward_into(&tree, train_set.row(i), &mut trace) {
                        Ok(()) => {}
                        Err(Error::NonFinite { .. }) => {
                            report.diverged = Some(DivergenceInfo {
                                epoch,
                                param_index: None,
                            });
                            break 'epochs;
                        }
                        Err(e) => return Err(e),
                    }
                    report.train_forward_passes += 1;
                    running.push(&trace.prediction, train_set.target(i));
                }
                saved_weights.clear();
                saved_weights.extend_from_slice(tree.weights());
                let lookahead = state.lookahead_params(tree.weights(), &cfg.hyper);
                tree.set_weights(&lookahead);
            }

            for v in batch_grads.iter_mut() {
                *v = S::zero();
            }
            let mut ok = true;
            for &i in batch {
                match forward_into(&tree, train_set.row(i), &mut trace) {
                    Ok(()) => {}
                    Err(Error::NonFinite { .. }) => {
                        ok = false;
                        break;
                    }
                    Err(e) => return Err(e),
                }
                report.train_forward_passes += 1;
                if !nag {
                    running.push(&trace.prediction, train_set.target(i));
                }
                compute_deltas_into(&tree, &trace, train_set.target(i), &mut deltas)?;
                compute_gradients_into(&tree, &trace, &deltas, &mut grads);
                for (acc, &g) in batch_grads.iter_mut().zip(grads.as_slice()) {
                    *acc += g;
                }
            }
            if !ok {
                report.diverged = Some(DivergenceInfo {
                    epoch,
                    param_index: None,
                });
                break 'epochs;
            }
            let scale = S::one() / S::from_f64(batch.len() as f64);
            for v in batch_grads.iter_mut() {
                *v *= scale;
            }
            if nag {
                tree.set_weights(&saved_weights);
            }
            report.optimizer_steps += 1;
            match state.step(tree.weights_mut(), &batch_grads, &cfg.hyper) {
                Ok(()) => {}
                Err(Error::Divergence { index }) => {
                    report.diverged = Some(DivergenceInfo {
                        epoch,
                        param_index: Some(index),
                    });
                    break 'epochs;
                }
                Err(e) => return Err(e),
            }
        }

        let (eval_loss, eval_metric) = eval_pass(&tree, eval_set, loss_kind, &mut trace)?;
        report.eval_forward_passes += eval_set.len() as u64;
        let record = EpochRecord {
            epoch,
            train_loss: running.loss(),
            eval_loss,
            train_metric: running.metric(tree.task().is_classification()),
            eval_metric,
        };
        report.per_epoch.push(record);
        report.stopped_epoch = epoch;

        if let Some(es) = &cfg.early_stopping {
            let monitored = match es.monitor {
                Monitor::TestError => record.eval_loss,
                Monitor::TrainError => record.train_loss,
            };
            if monitored < best_value {
                best_value = monitored;
                report.best_epoch = epoch;
                best_snapshot = Some(tree.weights().to_vec());
            }
            if epoch - report.best_epoch >= es.patience {
                break;
            }
        } else {
            report.best_epoch = epoch;
        }
    }

    if report.diverged.is_some() {
        // drop the poisoned weights: fall back to the best snapshot, or to
        // the boundary of the failed epoch
        match &best_snapshot {
            Some(snap) => {
                tree.set_weights(snap);
                report.final_params_restored = true;
            }
            None => tree.set_weights(&epoch_start_weights),
        }
    } else if cfg.early_stopping.is_some() {
        if let Some(snap) = &best_snapshot {
            tree.set_weights(snap);
            report.final_params_restored = true;
        }
    }

    report.wall_time_secs = start.elapsed().as_secs_f64();
    Ok((tree, report))
}

/// Measures a tree on a dataset: error rate and accuracy plus per-class
/// rates for classification, MSE and r² for regression.
pub fn evaluate<S: Scalar>(tree: &NeuralTree<S>, data: &Dataset<S>) -> Result<Evaluation<S>> {
    check_compat(tree, data)?;
    let loss_kind = default_loss(tree.task());
    let mut trace = ForwardTrace::new();
    let (loss, metric) = eval_pass(tree, data, loss_kind, &mut trace)?;
    match tree.task() {
        TaskKind::Classification { classes } => {
            let mut preds = Vec::with_capacity(data.len());
            for i in 0..data.len() {
                forward_into(tree, data.row(i), &mut trace)?;
                preds.push(trace.prediction.class().expect("classification tree"));
            }
            let truth = data.class_targets().expect("classification targets");
            let per_class = metrics::per_class_rates(&preds, truth, classes)?;
            Ok(Evaluation {
                loss: MetricValue {
                    kind: MetricKind::ErrorRate,
                    value: loss,
                },
                metric: MetricValue {
                    kind: MetricKind::Accuracy,
                    value: metric,
                },
                per_class: Some(per_class),
            })
        }
        TaskKind::Regression => Ok(Evaluation {
            loss: MetricValue {
                kind: MetricKind::Mse,
                value: loss,
            },
            metric: MetricValue {
                kind: MetricKind::R2Fit,
                value: metric,
            },
            per_class: None,
        }),
    }
}

/// Header of the per-epoch convergence CSV.
pub const CONVERGENCE_HEADER: &str = "run_id,epoch,train_loss,eval_loss,train_metric,eval_metric";

/// Appends one run's epoch records in the convergence-CSV row format.
pub fn write_convergence_rows<S: Scalar, W: Write>(
    w: &mut W,
    run_id: usize,
    records: &[EpochRecord<S>],
) -> std::io::Result<()> {
    for r in records {
        writeln!(
            w,
            "{run_id},{},{},{},{},{}",
            r.epoch, r.train_loss, r.eval_loss, r.train_metric, r.eval_metric
        )?;
    }
    Ok(())
}
