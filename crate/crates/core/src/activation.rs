//! Node activation functions.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tree::NodeId;
use serde::{Deserialize, Serialize};

/// Activation attached to a non-leaf node.
///
/// `ArgMax` is only valid at the root of a classification tree: it selects the
/// child with the highest activation and carries no trainable parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ActivationKind {
    Sigmoid,
    ReLU,
    ArgMax,
}

impl std::fmt::Display for ActivationKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ActivationKind::Sigmoid => write!(f, "sigmoid"),
            ActivationKind::ReLU => write!(f, "relu"),
            ActivationKind::ArgMax => write!(f, "argmax"),
        }
    }
}

/// Numerically stable sigmoid, split on the sign of `z` so that `exp` never
/// overflows for large |z|.
pub fn sigmoid<S: Scalar>(z: S) -> S {
    if z >= S::zero() {
        S::one() / (S::one() + (-z).exp())
    } else {
        let e = z.exp();
        e / (S::one() + e)
    }
}

/// Applies `kind` to a pre-activation. `ArgMax` has no pointwise form.
pub fn activate<S: Scalar>(kind: ActivationKind, z: S) -> Result<S> {
    if !z.is_finite() {
        return Err(Error::NonFinite { node: NodeId(0) });
    }
    Ok(match kind {
        ActivationKind::Sigmoid => sigmoid(z),
        ActivationKind::ReLU => {
            if z > S::zero() {
                z
            } else {
                S::zero()
            }
        }
        ActivationKind::ArgMax => {
            return Err(Error::Config(
                "argmax is not a pointwise activation".into(),
            ))
        }
    })
}

/// dφ/dz expressed from the pre-activation `z` and activation `h`.
///
/// The ReLU derivative at z = 0 is taken as 0.
pub fn derivative<S: Scalar>(kind: ActivationKind, z: S, h: S) -> S {
    match kind {
        ActivationKind::Sigmoid => h * (S::one() - h),
        ActivationKind::ReLU => {
            if z > S::zero() {
                S::one()
            } else {
                S::zero()
            }
        }
        ActivationKind::ArgMax => S::zero(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sigmoid_midpoint() {
        assert_eq!(sigmoid(0.0f64), 0.5);
    }

    #[test]
    fn sigmoid_known_value() {
        // 1/(1+e^-2)
        assert!((sigmoid(2.0f64) - 0.8807970779778823).abs() < 1e-15);
    }

    #[test]
    fn sigmoid_is_stable_at_extremes() {
        assert_eq!(sigmoid(800.0f64), 1.0);
        assert_eq!(sigmoid(-800.0f64), 0.0);
        assert!(sigmoid(-800.0f64).is_finite());
    }

    #[test]
    fn relu_clamps_negatives() {
        assert_eq!(activate(ActivationKind::ReLU, -3.2f64).unwrap(), 0.0);
        assert_eq!(activate(ActivationKind::ReLU, 1.5f64).unwrap(), 1.5);
    }

    #[test]
    fn relu_derivative_at_zero_is_zero() {
        assert_eq!(derivative(ActivationKind::ReLU, 0.0f64, 0.0), 0.0);
        assert_eq!(derivative(ActivationKind::ReLU, 1e-12f64, 1e-12), 1.0);
    }

    #[test]
    fn non_finite_pre_activation_is_an_error() {
        assert!(activate(ActivationKind::Sigmoid, f64::NAN).is_err());
        assert!(activate(ActivationKind::Sigmoid, f64::INFINITY).is_err());
    }
}
