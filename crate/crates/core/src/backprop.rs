//! Pre-order backward pass: per-node error signals and parameter gradients.
//!
//! The per-example loss is half the squared error: `0.5 * (yhat - y)^2` for
//! regression, and `0.5 * sum_c (score_c - onehot_c)^2` over the class-subtree
//! scores for classification. Deltas are the derivative of that loss with
//! respect to each node's pre-activation:
//!
//! - output node (regression root, or each class-subtree root with its
//!   one-hot target): `delta = (yhat - y) * phi'(z)`, which for a sigmoid
//!   output is `(yhat - y) * yhat * (1 - yhat)`;
//! - internal node `j` with parent `k`: `delta_j = phi'(z_j) * delta_k * w_jk`.
//!
//! Parents are written before their children are read (pre-order). Gradients
//! follow from the deltas: the edge from child `j` into parent `k` gets
//! `delta_k * h_j`, a bias gets the node's own delta, and edges into an
//! argmax root get zero (the root is parameter-free, its stored edge weights
//! never move).

use crate::activation;
use crate::error::{Error, Result};
use crate::forward::{self, ForwardTrace};
use crate::scalar::Scalar;
use crate::tree::{NeuralTree, NodeId, TaskKind};

/// Training target for one example.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Target<S: Scalar> {
    Class(usize),
    Real(S),
}

/// Per-node error signals. Entries are meaningful for output and internal
/// nodes; leaves and an argmax root keep zero.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DeltaMap<S: Scalar> {
    values: Vec<S>,
}

impl<S: Scalar> DeltaMap<S> {
    pub fn delta(&self, id: NodeId) -> S {
        self.values[id.index()]
    }

    pub fn set(&mut self, id: NodeId, v: S) {
        self.values[id.index()] = v;
    }

    fn reset(&mut self, n: usize) {
        self.values.clear();
        self.values.resize(n, S::zero());
    }
}

/// Gradient of the per-example loss, laid out exactly like the tree's
/// parameter vector.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct GradientVector<S: Scalar> {
    values: Vec<S>,
}

impl<S: Scalar> GradientVector<S> {
    pub fn as_slice(&self) -> &[S] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Gradient of the edge from `parent` to its `slot`-th child.
    pub fn edge_grad(&self, tree: &NeuralTree<S>, parent: NodeId, slot: usize) -> S {
        self.values[tree.node(parent).param_start as usize + slot]
    }

    /// Gradient of a node's bias.
    pub fn bias_grad(&self, tree: &NeuralTree<S>, id: NodeId) -> Option<S> {
        tree.bias_param(id).map(|i| self.values[i])
    }

    fn reset(&mut self, n: usize) {
        self.values.clear();
        self.values.resize(n, S::zero());
    }
}

fn check_pair<S: Scalar>(
    tree: &NeuralTree<S>,
    trace: &ForwardTrace<S>,
    target: Target<S>,
) -> Result<()> {
    if trace.activations.len() != tree.node_count() {
        return Err(Error::Dimension {
            expected: tree.node_count(),
            got: trace.activations.len(),
        });
    }
    match (tree.task(), target) {
        (TaskKind::Classification { classes }, Target::Class(c)) => {
            if c >= classes {
                return Err(Error::TaskMismatch(format!(
                    "class target {c} out of range for {classes} classes"
                )));
            }
        }
        (TaskKind::Regression, Target::Real(_)) => {}
        (task, target) => {
            return Err(Error::TaskMismatch(format!(
                "target {target:?} does not fit task {task:?}"
            )))
        }
    }
    Ok(())
}

fn local_derivative<S: Scalar>(tree: &NeuralTree<S>, trace: &ForwardTrace<S>, id: NodeId) -> S {
    let node = tree.node(id);
    let kind = node.activation.expect("delta only at activated nodes");
    activation::derivative(
        kind,
        trace.pre_activations[id.index()],
        trace.activations[id.index()],
    )
}

fn descend<S: Scalar>(
    tree: &NeuralTree<S>,
    trace: &ForwardTrace<S>,
    deltas: &mut DeltaMap<S>,
    id: NodeId,
    order: Option<&mut Vec<NodeId>>,
) {
    let node = tree.node(id);
    let parent_delta = deltas.delta(id);
    let start = node.param_start as usize;
    let mut order = order;
    for (slot, &child) in node.children.iter().enumerate() {
        if tree.node(child).is_leaf() {
            continue;
        }
        let w = tree.weights()[start + slot];
        let d = local_derivative(tree, trace, child) * parent_delta * w;
        deltas.set(child, d);
        if let Some(o) = order.as_deref_mut() {
            o.push(child);
        }
        descend(tree, trace, deltas, child, order.as_deref_mut());
    }
}

fn compute_deltas_impl<S: Scalar>(
    tree: &NeuralTree<S>,
    trace: &ForwardTrace<S>,
    target: Target<S>,
    deltas: &mut DeltaMap<S>,
    mut order: Option<&mut Vec<NodeId>>,
) -> Result<()> {
    check_pair(tree, trace, target)?;
    deltas.reset(tree.node_count());
    match (tree.task(), target) {
        (TaskKind::Regression, Target::Real(y)) => {
            let root = tree.root();
            let yhat = trace.activations[root.index()];
            let d = (yhat - y) * local_derivative(tree, trace, root);
            deltas.set(root, d);
            if let Some(o) = order.as_deref_mut() {
                o.push(root);
            }
            descend(tree, trace, deltas, root, order);
        }
        (TaskKind::Classification { .. }, Target::Class(c)) => {
            // Each class-subtree root is an output node with a one-hot
            // target; the argmax root itself carries no delta.
            let root_children = tree.node(tree.root()).children.clone();
            for (slot, &class_node) in root_children.iter().enumerate() {
                let y = if slot == c { S::one() } else { S::zero() };
                let yhat = trace.activations[class_node.index()];
                let d = (yhat - y) * local_derivative(tree, trace, class_node);
                deltas.set(class_node, d);
                if let Some(o) = order.as_deref_mut() {
                    o.push(class_node);
                }
                descend(tree, trace, deltas, class_node, order.as_deref_mut());
            }
        }
        _ => unreachable!("checked above"),
    }
    Ok(())
}

/// Pre-order delta computation for one (trace, target) pair.
pub fn compute_deltas<S: Scalar>(
    tree: &NeuralTree<S>,
    trace: &ForwardTrace<S>,
    target: Target<S>,
) -> Result<DeltaMap<S>> {
    let mut deltas = DeltaMap::default();
    compute_deltas_impl(tree, trace, target, &mut deltas, None)?;
    Ok(deltas)
}

/// Buffer-reusing variant of [`compute_deltas`].
pub fn compute_deltas_into<S: Scalar>(
    tree: &NeuralTree<S>,
    trace: &ForwardTrace<S>,
    target: Target<S>,
    deltas: &mut DeltaMap<S>,
) -> Result<()> {
    compute_deltas_impl(tree, trace, target, deltas, None)
}

/// Like [`compute_deltas`] but also reports the order in which deltas were
/// written, for checking the parent-before-child contract.
pub fn compute_deltas_traced<S: Scalar>(
    tree: &NeuralTree<S>,
    trace: &ForwardTrace<S>,
    target: Target<S>,
) -> Result<(DeltaMap<S>, Vec<NodeId>)> {
    let mut deltas = DeltaMap::default();
    let mut order = Vec::new();
    compute_deltas_impl(tree, trace, target, &mut deltas, Some(&mut order))?;
    Ok((deltas, order))
}

/// Gradients of the per-example loss for every trainable parameter.
pub fn compute_gradients_into<S: Scalar>(
    tree: &NeuralTree<S>,
    trace: &ForwardTrace<S>,
    deltas: &DeltaMap<S>,
    grads: &mut GradientVector<S>,
) {
    grads.reset(tree.param_count());
    for (id, node) in tree.nodes() {
        if node.is_leaf() {
            continue;
        }
        let start = node.param_start as usize;
        let d = deltas.delta(id);
        if !node.is_argmax() {
            for (slot, &child) in node.children.iter().enumerate() {
                grads.values[start + slot] = d * trace.activations[child.index()];
            }
        }
        if node.has_bias {
            grads.values[start + node.children.len()] = d;
        }
    }
}

pub fn compute_gradients<S: Scalar>(
    tree: &NeuralTree<S>,
    trace: &ForwardTrace<S>,
    deltas: &DeltaMap<S>,
) -> GradientVector<S> {
    let mut grads = GradientVector::default();
    compute_gradients_into(tree, trace, deltas, &mut grads);
    grads
}

/// Half-squared-error loss of one example, read off a forward trace.
pub fn example_loss<S: Scalar>(
    tree: &NeuralTree<S>,
    trace: &ForwardTrace<S>,
    target: Target<S>,
) -> Result<S> {
    check_pair(tree, trace, target)?;
    let half = S::from_f64(0.5);
    Ok(match (tree.task(), target) {
        (TaskKind::Regression, Target::Real(y)) => {
            let r = trace.activations[tree.root().index()] - y;
            half * r * r
        }
        (TaskKind::Classification { .. }, Target::Class(c)) => {
            let mut acc = S::zero();
            for (slot, &class_node) in tree.node(tree.root()).children.iter().enumerate() {
                let y = if slot == c { S::one() } else { S::zero() };
                let r = trace.activations[class_node.index()] - y;
                acc += r * r;
            }
            half * acc
        }
        _ => unreachable!("checked above"),
    })
}

/// Per-example loss at the tree's current parameters.
pub fn loss_at<S: Scalar>(tree: &NeuralTree<S>, x: &[S], target: Target<S>) -> Result<S> {
    let trace = forward::forward(tree, x)?;
    example_loss(tree, &trace, target)
}

/// Default perturbation for [`finite_difference_gradient`].
pub const DEFAULT_FD_STEP: f64 = 1e-6;

/// Central-difference gradient oracle.
///
/// Perturbs one parameter at a time and differences the per-example loss;
/// uses only the forward pass, never the analytic backward path, so it is an
/// independent check of [`compute_deltas`] / [`compute_gradients`].
pub fn finite_difference_gradient<S: Scalar>(
    tree: &NeuralTree<S>,
    x: &[S],
    target: Target<S>,
    h: S,
) -> Result<GradientVector<S>> {
    if h <= S::zero() {
        return Err(Error::Config("finite-difference step must be > 0".into()));
    }
    let mut probe = tree.clone();
    let two_h = S::from_f64(2.0) * h;
    let mut values = Vec::with_capacity(tree.param_count());
    for i in 0..tree.param_count() {
        let orig = probe.weights()[i];
        probe.weights_mut()[i] = orig + h;
        let plus = loss_at(&probe, x, target)?;
        probe.weights_mut()[i] = orig - h;
        let minus = loss_at(&probe, x, target)?;
        probe.weights_mut()[i] = orig;
        values.push((plus - minus) / two_h);
    }
    Ok(GradientVector { values })
}

/// Largest mismatch between two gradient vectors: pairs agree when their
/// absolute difference is below `floor` or their relative difference (against
/// the larger magnitude) is below the returned value.
pub fn max_relative_error<S: Scalar>(
    a: &GradientVector<S>,
    b: &GradientVector<S>,
    floor: S,
) -> S {
    assert_eq!(a.len(), b.len());
    let mut worst = S::zero();
    for (&x, &y) in a.values.iter().zip(&b.values) {
        let diff = (x - y).abs();
        if diff <= floor {
            continue;
        }
        let scale = x.abs().max(y.abs());
        let rel = if scale > S::zero() { diff / scale } else { diff };
        if rel > worst {
            worst = rel;
        }
    }
    worst
}
