//! Post-order forward pass.
//!
//! Children are evaluated before parents; each internal node computes
//! `z = bias + sum(w_i * child_i)` in child order and squashes it with its
//! activation. Two implementations are provided: [`forward`] walks node ids
//! in reverse (ids are depth-first preorder, so the reversal visits every
//! descendant before its ancestor) and [`forward_recursive`] recurses from
//! the root. Both perform the same arithmetic in the same order, so their
//! traces are bit-identical.

use crate::activation;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tree::{NeuralTree, NodeId, TaskKind};

/// Tree output for one input vector.
#[derive(Debug, Clone, PartialEq)]
pub enum Prediction<S: Scalar> {
    /// Winner class (ties broken toward the lowest index) and the raw
    /// per-class scores, i.e. the activations of the class-subtree roots.
    Classification { class: usize, scores: Vec<S> },
    Regression { value: S },
}

impl<S: Scalar> Prediction<S> {
    pub fn class(&self) -> Option<usize> {
        match self {
            Prediction::Classification { class, .. } => Some(*class),
            Prediction::Regression { .. } => None,
        }
    }

    pub fn value(&self) -> Option<S> {
        match self {
            Prediction::Regression { value } => Some(*value),
            Prediction::Classification { .. } => None,
        }
    }
}

impl<S: Scalar> Default for Prediction<S> {
    fn default() -> Self {
        Prediction::Regression { value: S::zero() }
    }
}

/// Per-node activations and pre-activations of one forward pass.
///
/// Leaves record their propagated input in both vectors; the argmax root
/// records the winning score.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ForwardTrace<S: Scalar> {
    pub activations: Vec<S>,
    pub pre_activations: Vec<S>,
    pub prediction: Prediction<S>,
}

impl<S: Scalar> ForwardTrace<S> {
    pub fn new() -> Self {
        Self::default()
    }

    fn reset(&mut self, n: usize) {
        self.activations.clear();
        self.activations.resize(n, S::zero());
        self.pre_activations.clear();
        self.pre_activations.resize(n, S::zero());
    }
}

fn check_input<S: Scalar>(tree: &NeuralTree<S>, x: &[S]) -> Result<()> {
    if x.len() != tree.input_dim() {
        return Err(Error::Dimension {
            expected: tree.input_dim(),
            got: x.len(),
        });
    }
    if let Some(i) = x.iter().position(|v| !v.is_finite()) {
        return Err(Error::Data(format!("non-finite input at feature {i}")));
    }
    Ok(())
}

/// Evaluates one non-leaf node from its (already computed) child activations.
fn eval_node<S: Scalar>(
    tree: &NeuralTree<S>,
    id: NodeId,
    trace: &mut ForwardTrace<S>,
    visits: Option<&mut [u32]>,
) -> Result<()> {
    let node = tree.node(id);
    if let Some(v) = visits {
        v[id.index()] += 1;
    }
    if node.is_leaf() {
        // set by the caller from the input vector
        return Ok(());
    }
    if node.is_argmax() {
        // winner-takes-all over the class-subtree activations
        let mut best = S::neg_infinity();
        for &child in &node.children {
            let h = trace.activations[child.index()];
            if h > best {
                best = h;
            }
        }
        trace.activations[id.index()] = best;
        trace.pre_activations[id.index()] = best;
        return Ok(());
    }
    let weights = tree.weights();
    let start = node.param_start as usize;
    let mut z = weights[start + node.children.len()]; // bias
    for (slot, &child) in node.children.iter().enumerate() {
        z += weights[start + slot] * trace.activations[child.index()];
    }
    if !z.is_finite() {
        return Err(Error::NonFinite { node: id });
    }
    let kind = node.activation.expect("non-leaf node has an activation");
    let h = activation::activate(kind, z).map_err(|_| Error::NonFinite { node: id })?;
    trace.pre_activations[id.index()] = z;
    trace.activations[id.index()] = h;
    Ok(())
}

fn fill_leaves<S: Scalar>(tree: &NeuralTree<S>, x: &[S], trace: &mut ForwardTrace<S>) {
    for (id, node) in tree.nodes() {
        if let Some(fi) = node.feature_index {
            let v = x[fi as usize];
            trace.activations[id.index()] = v;
            trace.pre_activations[id.index()] = v;
        }
    }
}

fn prediction_from_activations<S: Scalar>(
    tree: &NeuralTree<S>,
    trace: &mut ForwardTrace<S>,
) {
    match tree.task() {
        TaskKind::Classification { .. } => {
            let root = tree.node(tree.root());
            let mut scores = match std::mem::take(&mut trace.prediction) {
                Prediction::Classification { scores, .. } => scores,
                _ => Vec::new(),
            };
            scores.clear();
            let mut class = 0usize;
            let mut best = S::neg_infinity();
            for (slot, &child) in root.children.iter().enumerate() {
                let h = trace.activations[child.index()];
                scores.push(h);
                if h > best {
                    best = h;
                    class = slot;
                }
            }
            trace.prediction = Prediction::Classification { class, scores };
        }
        TaskKind::Regression => {
            trace.prediction = Prediction::Regression {
                value: trace.activations[tree.root().index()],
            };
        }
    }
}

fn forward_iterative_impl<S: Scalar>(
    tree: &NeuralTree<S>,
    x: &[S],
    trace: &mut ForwardTrace<S>,
    mut visits: Option<&mut [u32]>,
) -> Result<()> {
    check_input(tree, x)?;
    trace.reset(tree.node_count());
    fill_leaves(tree, x, trace);
    // Ids are preorder, so the reverse order visits children before parents.
    for i in (0..tree.node_count()).rev() {
        eval_node(tree, NodeId(i as u32), trace, visits.as_deref_mut())?;
    }
    prediction_from_activations(tree, trace);
    Ok(())
}

fn forward_recursive_impl<S: Scalar>(
    tree: &NeuralTree<S>,
    id: NodeId,
    trace: &mut ForwardTrace<S>,
    visits: &mut Option<&mut [u32]>,
) -> Result<()> {
    for i in 0..tree.node(id).children.len() {
        let child = tree.node(id).children[i];
        forward_recursive_impl(tree, child, trace, visits)?;
    }
    eval_node(tree, id, trace, visits.as_deref_mut())
}

/// Runs a forward pass, reusing the buffers of `trace`.
pub fn forward_into<S: Scalar>(
    tree: &NeuralTree<S>,
    x: &[S],
    trace: &mut ForwardTrace<S>,
) -> Result<()> {
    forward_iterative_impl(tree, x, trace, None)
}

/// Forward pass (iterative post-order).
pub fn forward<S: Scalar>(tree: &NeuralTree<S>, x: &[S]) -> Result<ForwardTrace<S>> {
    let mut trace = ForwardTrace::new();
    forward_into(tree, x, &mut trace)?;
    Ok(trace)
}

/// Forward pass by recursive post-order traversal from the root.
pub fn forward_recursive<S: Scalar>(tree: &NeuralTree<S>, x: &[S]) -> Result<ForwardTrace<S>> {
    check_input(tree, x)?;
    let mut trace = ForwardTrace::new();
    trace.reset(tree.node_count());
    fill_leaves(tree, x, &mut trace);
    let mut visits = None;
    forward_recursive_impl(tree, tree.root(), &mut trace, &mut visits)?;
    prediction_from_activations(tree, &mut trace);
    Ok(trace)
}

/// Forward pass that also counts how many times each node was evaluated.
pub fn forward_counted<S: Scalar>(
    tree: &NeuralTree<S>,
    x: &[S],
    recursive: bool,
) -> Result<(ForwardTrace<S>, Vec<u32>)> {
    let mut visits = vec![0u32; tree.node_count()];
    let mut trace = ForwardTrace::new();
    if recursive {
        check_input(tree, x)?;
        trace.reset(tree.node_count());
        fill_leaves(tree, x, &mut trace);
        let mut v = Some(visits.as_mut_slice());
        forward_recursive_impl(tree, tree.root(), &mut trace, &mut v)?;
        prediction_from_activations(tree, &mut trace);
    } else {
        forward_iterative_impl(tree, x, &mut trace, Some(visits.as_mut_slice()))?;
    }
    Ok((trace, visits))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::activation::ActivationKind;
    use crate::tree::{generate_tree, TreeBuilder, TreeGenConfig};

    fn two_leaf_tree(w0: f64, w1: f64, bias: f64) -> NeuralTree<f64> {
        let mut b = TreeBuilder::new(TaskKind::Regression, 2, 5, 5);
        let root = b.root(ActivationKind::Sigmoid, Some(bias));
        b.leaf(root, w0, 0);
        b.leaf(root, w1, 1);
        b.finish()
    }

    #[test]
    fn zero_weights_zero_bias_gives_half() {
        let t = two_leaf_tree(0.0, 0.0, 0.0);
        let trace = forward(&t, &[1.0, 1.0]).unwrap();
        assert_eq!(trace.prediction.value(), Some(0.5));
    }

    #[test]
    fn weighted_sum_example() {
        // z = 0.2*1 + 0.4*0.5 + 0.1 = 0.5, sigmoid(0.5) = 0.6224593312018546
        let t = two_leaf_tree(0.2, 0.4, 0.1);
        let trace = forward(&t, &[1.0, 0.5]).unwrap();
        let y = trace.prediction.value().unwrap();
        assert!((y - 0.6224593312018546).abs() < 1e-15);
        assert_eq!(trace.pre_activations[0], 0.5);
    }

    #[test]
    fn classification_ties_break_toward_lowest_index() {
        let mut b = TreeBuilder::new(TaskKind::Classification { classes: 3 }, 1, 5, 5);
        let root = b.root(ActivationKind::ArgMax, None);
        // class scores: sigmoid(bias) with zero edge weights
        for bias in [-1.386294361119890_6, 2.197224577336219_4, 2.197224577336219_4] {
            let c = b.internal(root, 0.7, ActivationKind::Sigmoid, bias);
            b.leaf(c, 0.0, 0);
            b.leaf(c, 0.0, 0);
        }
        let t = b.finish();
        let trace = forward(&t, &[0.3]).unwrap();
        // scores ~ (0.2, 0.9, 0.9): winner is class 1
        assert_eq!(trace.prediction.class(), Some(1));
        match &trace.prediction {
            Prediction::Classification { scores, .. } => {
                assert!((scores[0].to_f64() - 0.2).abs() < 1e-12);
                assert!((scores[1].to_f64() - 0.9).abs() < 1e-12);
            }
            _ => unreachable!(),
        }
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let t = two_leaf_tree(0.2, 0.4, 0.1);
        assert!(matches!(
            forward(&t, &[1.0]),
            Err(Error::Dimension { expected: 2, got: 1 })
        ));
        assert!(forward(&t, &[1.0, f64::NAN]).is_err());
    }

    #[test]
    fn iterative_and_recursive_traces_are_bit_identical() {
        for seed in 0..40u64 {
            let cfg = TreeGenConfig {
                rng_seed: seed,
                leaf_prob: 0.45,
                ..TreeGenConfig::default()
            };
            let task = if seed % 2 == 0 {
                TaskKind::Classification { classes: 3 }
            } else {
                TaskKind::Regression
            };
            let t: NeuralTree<f64> = generate_tree(&cfg, task, 6).unwrap();
            let x: Vec<f64> = (0..6).map(|i| (i as f64) / 7.0 + seed as f64 * 1e-3).collect();
            let a = forward(&t, &x).unwrap();
            let b = forward_recursive(&t, &x).unwrap();
            let bits = |v: &[f64]| v.iter().map(|f| f.to_bits()).collect::<Vec<_>>();
            assert_eq!(bits(&a.activations), bits(&b.activations));
            assert_eq!(bits(&a.pre_activations), bits(&b.pre_activations));
            assert_eq!(a.prediction, b.prediction);
        }
    }

    #[test]
    fn every_node_visited_exactly_once() {
        let cfg = TreeGenConfig {
            rng_seed: 11,
            ..TreeGenConfig::default()
        };
        let t: NeuralTree<f64> =
            generate_tree(&cfg, TaskKind::Classification { classes: 4 }, 5).unwrap();
        let x = [0.1, 0.9, 0.4, 0.7, 0.2];
        for recursive in [false, true] {
            let (_, visits) = forward_counted(&t, &x, recursive).unwrap();
            assert!(visits.iter().all(|&v| v == 1), "{visits:?}");
        }
    }

    #[test]
    fn all_positive_weights_respond_monotonically() {
        for seed in 0..10u64 {
            let cfg = TreeGenConfig {
                rng_seed: 500 + seed,
                weight_init: (0.05, 1.0),
                ..TreeGenConfig::default()
            };
            let t: NeuralTree<f64> = generate_tree(&cfg, TaskKind::Regression, 4).unwrap();
            let base = [0.3, 0.3, 0.3, 0.3];
            let y0 = forward(&t, &base).unwrap().prediction.value().unwrap();
            for i in 0..4 {
                let mut x = base;
                x[i] += 0.4;
                let y1 = forward(&t, &x).unwrap().prediction.value().unwrap();
                assert!(y1 >= y0, "seed {seed} input {i}: {y1} < {y0}");
            }
        }
    }

    #[test]
    fn sigmoid_activations_stay_in_unit_interval() {
        let cfg = TreeGenConfig {
            rng_seed: 77,
            ..TreeGenConfig::default()
        };
        let t: NeuralTree<f64> = generate_tree(&cfg, TaskKind::Regression, 3).unwrap();
        let trace = forward(&t, &[0.2, 0.8, 0.5]).unwrap();
        for (id, node) in t.nodes() {
            if node.activation == Some(ActivationKind::Sigmoid) {
                let h = trace.activations[id.index()];
                assert!(h > 0.0 && h < 1.0);
            }
        }
    }
}
