//! Loss and fit measures: error rate, MSE, Nash–Sutcliffe r², per-class rates.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MetricKind {
    ErrorRate,
    Accuracy,
    Mse,
    R2Fit,
}

impl std::fmt::Display for MetricKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            MetricKind::ErrorRate => write!(f, "error_rate"),
            MetricKind::Accuracy => write!(f, "accuracy"),
            MetricKind::Mse => write!(f, "mse"),
            MetricKind::R2Fit => write!(f, "r2_fit"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricValue<S: Scalar> {
    pub kind: MetricKind,
    pub value: S,
}

fn check_lengths(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::Dimension { expected: a, got: b });
    }
    if a == 0 {
        return Err(Error::EmptyDataset);
    }
    Ok(())
}

/// Fraction of mismatched class predictions.
pub fn error_rate<S: Scalar>(pred: &[usize], truth: &[usize]) -> Result<S> {
    check_lengths(pred.len(), truth.len())?;
    let wrong = pred.iter().zip(truth).filter(|(p, t)| p != t).count();
    Ok(S::from_f64(wrong as f64 / pred.len() as f64))
}

/// `1 - error_rate`, computed so the two always sum to exactly one.
pub fn accuracy<S: Scalar>(pred: &[usize], truth: &[usize]) -> Result<S> {
    Ok(S::one() - error_rate::<S>(pred, truth)?)
}

/// Mean squared error.
pub fn mse<S: Scalar>(pred: &[S], truth: &[S]) -> Result<S> {
    check_lengths(pred.len(), truth.len())?;
    let mut acc = S::zero();
    for (&p, &t) in pred.iter().zip(truth) {
        let r = p - t;
        acc += r * r;
    }
    Ok(acc / S::from_f64(pred.len() as f64))
}

/// Nash–Sutcliffe model efficiency: `1 - SSE / SST`. Perfect prediction
/// scores 1, predicting the mean scores 0, worse-than-mean is negative.
pub fn r2_fit<S: Scalar>(pred: &[S], truth: &[S]) -> Result<S> {
    check_lengths(pred.len(), truth.len())?;
    if pred.len() < 2 {
        return Err(Error::MetricUndefined(
            "r2 needs at least two observations".into(),
        ));
    }
    let n = S::from_f64(truth.len() as f64);
    let mean = truth.iter().copied().sum::<S>() / n;
    let mut sse = S::zero();
    let mut sst = S::zero();
    for (&p, &t) in pred.iter().zip(truth) {
        let e = t - p;
        sse += e * e;
        let d = t - mean;
        sst += d * d;
    }
    if sst == S::zero() {
        return Err(Error::MetricUndefined(
            "r2 undefined for constant truth".into(),
        ));
    }
    Ok(S::one() - sse / sst)
}

/// One-vs-rest true/false positive rates of a single class. A rate is `None`
/// when its denominator is empty (class absent from the truth, or no
/// negatives exist).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassRates<S: Scalar> {
    pub tpr: Option<S>,
    pub fpr: Option<S>,
}

pub fn per_class_rates<S: Scalar>(
    pred: &[usize],
    truth: &[usize],
    classes: usize,
) -> Result<Vec<ClassRates<S>>> {
    check_lengths(pred.len(), truth.len())?;
    if let Some(&bad) = pred.iter().chain(truth).find(|&&c| c >= classes) {
        return Err(Error::Data(format!(
            "class index {bad} out of range for {classes} classes"
        )));
    }
    let mut out = Vec::with_capacity(classes);
    for c in 0..classes {
        let mut tp = 0usize;
        let mut fn_ = 0usize;
        let mut fp = 0usize;
        let mut tn = 0usize;
        for (&p, &t) in pred.iter().zip(truth) {
            match (p == c, t == c) {
                (true, true) => tp += 1,
                (false, true) => fn_ += 1,
                (true, false) => fp += 1,
                (false, false) => tn += 1,
            }
        }
        let ratio = |num: usize, den: usize| {
            (den > 0).then(|| S::from_f64(num as f64 / den as f64))
        };
        out.push(ClassRates {
            tpr: ratio(tp, tp + fn_),
            fpr: ratio(fp, fp + tn),
        });
    }
    Ok(out)
}
