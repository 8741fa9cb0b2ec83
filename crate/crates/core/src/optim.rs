//! Per-parameter update rules: GD, momentum, Nesterov, Adagrad, RMSprop, Adam.
//!
//! All six rules subtract their step from the parameters (descent). For NAG
//! the caller is responsible for evaluating the gradient at the lookahead
//! point returned by [`OptimizerState::lookahead_params`] before calling
//! [`OptimizerState::step`]; the update itself is then the momentum rule.
//!
//! RMSprop supports two accumulator orientations. The default,
//! [`RmspropConvention::Paper`], is `v <- (1-gamma) v + gamma g^2`, which at
//! `gamma = 0.9` weights the newest squared gradient heavily; `Standard` is
//! the textbook `v <- gamma v + (1-gamma) g^2`. Adam keeps raw moments and
//! applies bias correction at use. The stabilizer sits inside the square
//! root, `sqrt(v + eps)`, for Adagrad, RMSprop and Adam alike.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Gd,
    Mgd,
    Nag,
    Adagrad,
    Rmsprop,
    Adam,
}

impl OptimizerKind {
    pub const ALL: [OptimizerKind; 6] = [
        OptimizerKind::Gd,
        OptimizerKind::Mgd,
        OptimizerKind::Nag,
        OptimizerKind::Adagrad,
        OptimizerKind::Rmsprop,
        OptimizerKind::Adam,
    ];

    pub fn name(self) -> &'static str {
        match self {
            OptimizerKind::Gd => "gd",
            OptimizerKind::Mgd => "mgd",
            OptimizerKind::Nag => "nag",
            OptimizerKind::Adagrad => "adagrad",
            OptimizerKind::Rmsprop => "rmsprop",
            OptimizerKind::Adam => "adam",
        }
    }
}

impl std::str::FromStr for OptimizerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.to_ascii_lowercase().as_str() {
            "gd" => OptimizerKind::Gd,
            "mgd" => OptimizerKind::Mgd,
            "nag" => OptimizerKind::Nag,
            "adagrad" => OptimizerKind::Adagrad,
            "rmsprop" => OptimizerKind::Rmsprop,
            "adam" => OptimizerKind::Adam,
            other => return Err(Error::Config(format!("unknown optimizer '{other}'"))),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum RmspropConvention {
    #[default]
    Paper,
    Standard,
}

/// Optimizer hyperparameters; the defaults are the experiment values
/// (eta 0.1, gamma 0.9, beta1 = beta2 = 0.9, epsilon 1e-8).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HyperParams {
    pub eta: f64,
    pub gamma: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    #[serde(default)]
    pub rmsprop_convention: RmspropConvention,
}

impl Default for HyperParams {
    fn default() -> Self {
        HyperParams {
            eta: 0.1,
            gamma: 0.9,
            beta1: 0.9,
            beta2: 0.9,
            epsilon: 1e-8,
            rmsprop_convention: RmspropConvention::Paper,
        }
    }
}

impl HyperParams {
    pub fn validate(&self) -> Result<()> {
        if self.eta <= 0.0 {
            return Err(Error::Config("eta must be > 0".into()));
        }
        for (name, v) in [
            ("gamma", self.gamma),
            ("beta1", self.beta1),
            ("beta2", self.beta2),
        ] {
            if !(0.0..1.0).contains(&v) {
                return Err(Error::Config(format!("{name} must lie in [0, 1)")));
            }
        }
        if self.epsilon <= 0.0 {
            return Err(Error::Config("epsilon must be > 0".into()));
        }
        Ok(())
    }
}

/// Per-parameter accumulator state of one optimizer instance.
///
/// `v` holds the velocity (MGD/NAG) or the second-moment accumulator
/// (Adagrad/RMSprop/Adam); `m` is Adam's first moment. Both start at zero and
/// `step` counts completed updates.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState<S: Scalar> {
    kind: OptimizerKind,
    v: Vec<S>,
    m: Vec<S>,
    step: u64,
}

impl<S: Scalar> OptimizerState<S> {
    pub fn new(kind: OptimizerKind, param_count: usize) -> Self {
        OptimizerState {
            kind,
            v: vec![S::zero(); param_count],
            m: if kind == OptimizerKind::Adam {
                vec![S::zero(); param_count]
            } else {
                Vec::new()
            },
            step: 0,
        }
    }

    pub fn kind(&self) -> OptimizerKind {
        self.kind
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    pub fn velocity(&self) -> &[S] {
        &self.v
    }

    /// Point at which the gradient must be evaluated before the next
    /// [`OptimizerState::step`]: `w - gamma v` for NAG, `w` otherwise.
    pub fn lookahead_params(&self, params: &[S], hp: &HyperParams) -> Vec<S> {
        match self.kind {
            OptimizerKind::Nag => {
                let gamma = S::from_f64(hp.gamma);
                params
                    .iter()
                    .zip(&self.v)
                    .map(|(&w, &v)| w - gamma * v)
                    .collect()
            }
            _ => params.to_vec(),
        }
    }

    /// Applies one update in place. Fails with the offending parameter index
    /// if any parameter leaves the finite range.
    pub fn step(&mut self, params: &mut [S], grads: &[S], hp: &HyperParams) -> Result<()> {
        assert_eq!(
            params.len(),
            grads.len(),
            "parameter/gradient length mismatch"
        );
        assert_eq!(params.len(), self.v.len(), "state sized for another tree");
        let eta = S::from_f64(hp.eta);
        let gamma = S::from_f64(hp.gamma);
        let eps = S::from_f64(hp.epsilon);
        self.step += 1;
        match self.kind {
            OptimizerKind::Gd => {
                for (w, &g) in params.iter_mut().zip(grads) {
                    *w -= eta * g;
                }
            }
            OptimizerKind::Mgd | OptimizerKind::Nag => {
                for ((w, v), &g) in params.iter_mut().zip(&mut self.v).zip(grads) {
                    *v = gamma * *v + eta * g;
                    *w -= *v;
                }
            }
            OptimizerKind::Adagrad => {
                for ((w, v), &g) in params.iter_mut().zip(&mut self.v).zip(grads) {
                    *v += g * g;
                    *w -= eta * g / (*v + eps).sqrt();
                }
            }
            OptimizerKind::Rmsprop => {
                let (keep, fresh) = match hp.rmsprop_convention {
                    RmspropConvention::Paper => (S::one() - gamma, gamma),
                    RmspropConvention::Standard => (gamma, S::one() - gamma),
                };
                for ((w, v), &g) in params.iter_mut().zip(&mut self.v).zip(grads) {
                    *v = keep * *v + fresh * g * g;
                    *w -= eta * g / (*v + eps).sqrt();
                }
            }
            OptimizerKind::Adam => {
                let beta1 = S::from_f64(hp.beta1);
                let beta2 = S::from_f64(hp.beta2);
                let t = self.step as i32;
                let c1 = S::one() - S::from_f64(hp.beta1.powi(t));
                let c2 = S::one() - S::from_f64(hp.beta2.powi(t));
                for (((w, v), m), &g) in params
                    .iter_mut()
                    .zip(&mut self.v)
                    .zip(&mut self.m)
                    .zip(grads)
                {
                    *m = beta1 * *m + (S::one() - beta1) * g;
                    *v = beta2 * *v + (S::one() - beta2) * g * g;
                    let m_hat = *m / c1;
                    let v_hat = *v / c2;
                    *w -= eta * m_hat / (v_hat + eps).sqrt();
                }
            }
        }
        if let Some(index) = params.iter().position(|w| !w.is_finite()) {
            return Err(Error::Divergence { index });
        }
        Ok(())
    }
}
