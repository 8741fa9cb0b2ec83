//! The neural-tree data model and stochastic generation.
//!
//! A tree is stored as an arena of nodes in depth-first preorder, so a node's
//! id is always greater than its parent's. All trainable parameters live in a
//! single flat `weights` vector: node `k` owns the contiguous block
//! `[param_start .. param_start + children + has_bias]`, holding the weights
//! of the edges to its children (in child order) followed by its bias. That
//! vector is what the optimizers update and what model snapshots copy.
//!
//! Parameter counting: a tree with `n` nodes has `n - 1` edges (every node but
//! the root has one incoming edge, stored at its parent) plus one bias per
//! non-leaf node other than an argmax root. Edges into an argmax root are
//! stored and counted but receive zero gradient, so they keep their initial
//! values.

use crate::activation::ActivationKind;
use crate::error::{Error, Result};
use crate::rng;
use crate::scalar::Scalar;
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Dense index into a tree's node store. Id 0 is always the root.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(pub u32);

impl NodeId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl std::fmt::Display for NodeId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeKind {
    Root,
    Internal,
    Leaf,
}

/// Learning task a tree is generated for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum TaskKind {
    Classification { classes: usize },
    Regression,
}

impl TaskKind {
    pub fn is_classification(&self) -> bool {
        matches!(self, TaskKind::Classification { .. })
    }

    /// Number of output values: class count, or 1 for regression.
    pub fn outputs(&self) -> usize {
        match *self {
            TaskKind::Classification { classes } => classes,
            TaskKind::Regression => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Node {
    pub kind: NodeKind,
    /// Present on every non-leaf node.
    pub activation: Option<ActivationKind>,
    /// Present exactly on leaves: index into the input feature vector.
    pub feature_index: Option<u32>,
    pub parent: Option<NodeId>,
    /// Slot of this node in its parent's child list.
    pub parent_slot: u32,
    pub children: Vec<NodeId>,
    /// Start of this node's parameter block in the tree's weight vector.
    pub param_start: u32,
    pub has_bias: bool,
}

impl Node {
    pub fn is_leaf(&self) -> bool {
        self.kind == NodeKind::Leaf
    }

    pub fn is_argmax(&self) -> bool {
        self.activation == Some(ActivationKind::ArgMax)
    }
}

/// Stochastic-generation knobs.
///
/// `leaf_prob` is the probability that a child generated above the depth cap
/// terminates its branch as a leaf; children created at the depth cap are
/// always leaves. `min_size` is a node-count floor (`None` selects twice the
/// output count); generation retries with fresh draws from the same stream
/// until the floor is met or the retry budget runs out.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeGenConfig {
    pub depth_cap: u32,
    pub arity_cap: u32,
    pub leaf_prob: f64,
    #[serde(default)]
    pub min_size: Option<usize>,
    pub weight_init: (f64, f64),
    pub internal_activation: ActivationKind,
    pub rng_seed: u64,
}

impl Default for TreeGenConfig {
    fn default() -> Self {
        TreeGenConfig {
            depth_cap: 5,
            arity_cap: 5,
            leaf_prob: 0.4,
            min_size: None,
            weight_init: (0.0, 1.0),
            internal_activation: ActivationKind::Sigmoid,
            rng_seed: 0,
        }
    }
}

const RETRY_BUDGET: usize = 1000;

/// Rooted m-ary neural tree: the trainable hypothesis.
#[derive(Debug, Clone, PartialEq)]
pub struct NeuralTree<S: Scalar> {
    nodes: Vec<Node>,
    weights: Vec<S>,
    task: TaskKind,
    depth_cap: u32,
    arity_cap: u32,
    input_dim: usize,
    rng_seed: u64,
}

/// Edge and bias counts of a tree.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParamCounts {
    pub edges: usize,
    pub biases: usize,
    pub total: usize,
}

impl<S: Scalar> NeuralTree<S> {
    pub fn root(&self) -> NodeId {
        NodeId(0)
    }

    pub fn node(&self, id: NodeId) -> &Node {
        &self.nodes[id.index()]
    }

    pub fn nodes(&self) -> impl Iterator<Item = (NodeId, &Node)> {
        self.nodes.iter().enumerate().map(|(i, n)| (NodeId(i as u32), n))
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn task(&self) -> TaskKind {
        self.task
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn depth_cap(&self) -> u32 {
        self.depth_cap
    }

    pub fn arity_cap(&self) -> u32 {
        self.arity_cap
    }

    pub fn rng_seed(&self) -> u64 {
        self.rng_seed
    }

    /// The flat trainable-parameter vector (edge weights and biases).
    pub fn weights(&self) -> &[S] {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut [S] {
        &mut self.weights
    }

    pub fn set_weights(&mut self, w: &[S]) {
        assert_eq!(w.len(), self.weights.len(), "parameter vector length");
        self.weights.copy_from_slice(w);
    }

    pub fn param_count(&self) -> usize {
        self.weights.len()
    }

    /// Weight of the edge from `parent` to its `slot`-th child.
    pub fn edge_weight(&self, parent: NodeId, slot: usize) -> S {
        let n = self.node(parent);
        debug_assert!(slot < n.children.len());
        self.weights[n.param_start as usize + slot]
    }

    /// Bias of a node, if it has one.
    pub fn bias(&self, id: NodeId) -> Option<S> {
        let n = self.node(id);
        n.has_bias
            .then(|| self.weights[n.param_start as usize + n.children.len()])
    }

    /// Index of the edge parameter feeding `child` from its parent.
    pub fn incoming_edge_param(&self, child: NodeId) -> Option<usize> {
        let c = self.node(child);
        let parent = self.node(c.parent?);
        Some(parent.param_start as usize + c.parent_slot as usize)
    }

    pub fn bias_param(&self, id: NodeId) -> Option<usize> {
        let n = self.node(id);
        n.has_bias
            .then(|| n.param_start as usize + n.children.len())
    }

    /// Depth of a node, root at depth 0.
    pub fn depth_of(&self, id: NodeId) -> u32 {
        let mut d = 0;
        let mut cur = id;
        while let Some(p) = self.node(cur).parent {
            d += 1;
            cur = p;
        }
        d
    }
}

/// n = |V| + |T|: total node count including the root.
pub fn tree_size<S: Scalar>(tree: &NeuralTree<S>) -> usize {
    tree.node_count()
}

/// Edge count (n - 1), bias count, and their sum.
pub fn count_parameters<S: Scalar>(tree: &NeuralTree<S>) -> ParamCounts {
    let edges = tree.node_count() - 1;
    let biases = tree.nodes.iter().filter(|n| n.has_bias).count();
    ParamCounts {
        edges,
        biases,
        total: edges + biases,
    }
}

/// Upper bound on node count for depth cap `p` and arity cap `m`:
/// (m^(p+1) - 1) / (m - 1), saturating at `usize::MAX`.
pub fn node_count_bound(depth_cap: u32, arity_cap: u32) -> usize {
    let m = arity_cap as u128;
    let mut pow: u128 = 1;
    for _ in 0..=depth_cap {
        pow = match pow.checked_mul(m) {
            Some(v) => v,
            None => return usize::MAX,
        };
    }
    usize::try_from((pow - 1) / (m - 1)).unwrap_or(usize::MAX)
}

/// Task-aware size bound. A classification root takes exactly `r` children,
/// which may exceed the arity cap, so its bound is `1 + r * (m^p - 1)/(m-1)`
/// (equal to [`node_count_bound`] when `r = m`, smaller when `r < m`).
pub fn node_count_bound_for(task: TaskKind, depth_cap: u32, arity_cap: u32) -> usize {
    match task {
        TaskKind::Regression => node_count_bound(depth_cap, arity_cap),
        TaskKind::Classification { classes } => {
            let per_subtree = node_count_bound(depth_cap - 1, arity_cap);
            classes
                .checked_mul(per_subtree)
                .and_then(|n| n.checked_add(1))
                .unwrap_or(usize::MAX)
        }
    }
}

// ---------------------------------------------------------------------------
// Generation
// ---------------------------------------------------------------------------

struct GenCtx<'a, R: Rng> {
    rng: &'a mut R,
    cfg: &'a TreeGenConfig,
    input_dim: usize,
}

impl<R: Rng> GenCtx<'_, R> {
    fn draw_weight(&mut self) -> f64 {
        let (lo, hi) = self.cfg.weight_init;
        if lo == hi {
            lo
        } else {
            self.rng.gen_range(lo..=hi)
        }
    }

    fn draw_child_count(&mut self) -> usize {
        self.rng.gen_range(2..=self.cfg.arity_cap as usize)
    }

    fn draw_feature(&mut self) -> u32 {
        self.rng.gen_range(0..self.input_dim as u32)
    }

    fn draw_is_leaf(&mut self) -> bool {
        self.rng.gen::<f64>() < self.cfg.leaf_prob
    }
}

struct BuildNode {
    kind: NodeKind,
    activation: Option<ActivationKind>,
    feature_index: Option<u32>,
    parent: Option<NodeId>,
    parent_slot: u32,
    children: Vec<NodeId>,
    incoming: f64,
    bias: Option<f64>,
}

fn gen_subtree<R: Rng>(
    ctx: &mut GenCtx<R>,
    nodes: &mut Vec<BuildNode>,
    parent: NodeId,
    slot: u32,
    depth: u32,
) -> NodeId {
    let incoming = ctx.draw_weight();
    let forced_leaf = depth >= ctx.cfg.depth_cap;
    let id = NodeId(nodes.len() as u32);
    if forced_leaf || ctx.draw_is_leaf() {
        let feature = ctx.draw_feature();
        nodes.push(BuildNode {
            kind: NodeKind::Leaf,
            activation: None,
            feature_index: Some(feature),
            parent: Some(parent),
            parent_slot: slot,
            children: Vec::new(),
            incoming,
            bias: None,
        });
        nodes[parent.index()].children.push(id);
        id
    } else {
        let bias = ctx.draw_weight();
        nodes.push(BuildNode {
            kind: NodeKind::Internal,
            activation: Some(ctx.cfg.internal_activation),
            feature_index: None,
            parent: Some(parent),
            parent_slot: slot,
            children: Vec::new(),
            incoming,
            bias: Some(bias),
        });
        nodes[parent.index()].children.push(id);
        let count = ctx.draw_child_count();
        for s in 0..count {
            gen_subtree(ctx, nodes, id, s as u32, depth + 1);
        }
        id
    }
}

fn gen_attempt<R: Rng>(ctx: &mut GenCtx<R>, task: TaskKind) -> Vec<BuildNode> {
    let mut nodes = Vec::new();
    match task {
        TaskKind::Classification { classes } => {
            nodes.push(BuildNode {
                kind: NodeKind::Root,
                activation: Some(ActivationKind::ArgMax),
                feature_index: None,
                parent: None,
                parent_slot: 0,
                children: Vec::new(),
                incoming: 0.0,
                bias: None,
            });
            // One subtree per class. Class-subtree roots act as sigmoid
            // output nodes regardless of the internal activation, so the
            // output-delta rule stays the derivative of the squared error.
            for c in 0..classes {
                let incoming = ctx.draw_weight();
                let bias = ctx.draw_weight();
                let id = NodeId(nodes.len() as u32);
                nodes.push(BuildNode {
                    kind: NodeKind::Internal,
                    activation: Some(ActivationKind::Sigmoid),
                    feature_index: None,
                    parent: Some(NodeId(0)),
                    parent_slot: c as u32,
                    children: Vec::new(),
                    incoming,
                    bias: Some(bias),
                });
                nodes[0].children.push(id);
                let count = ctx.draw_child_count();
                for s in 0..count {
                    gen_subtree(ctx, &mut nodes, id, s as u32, 2);
                }
            }
        }
        TaskKind::Regression => {
            let bias = ctx.draw_weight();
            nodes.push(BuildNode {
                kind: NodeKind::Root,
                activation: Some(ActivationKind::Sigmoid),
                feature_index: None,
                parent: None,
                parent_slot: 0,
                children: Vec::new(),
                incoming: 0.0,
                bias: Some(bias),
            });
            let count = ctx.draw_child_count();
            for s in 0..count {
                gen_subtree(ctx, &mut nodes, NodeId(0), s as u32, 1);
            }
        }
    }
    nodes
}

fn materialize<S: Scalar>(
    build: Vec<BuildNode>,
    task: TaskKind,
    cfg: &TreeGenConfig,
    input_dim: usize,
) -> NeuralTree<S> {
    let mut nodes = Vec::with_capacity(build.len());
    let mut weights = Vec::new();
    for b in &build {
        let has_bias = b.bias.is_some();
        let param_start = weights.len() as u32;
        for &child in &b.children {
            weights.push(S::from_f64(build[child.index()].incoming));
        }
        if let Some(bias) = b.bias {
            weights.push(S::from_f64(bias));
        }
        nodes.push(Node {
            kind: b.kind,
            activation: b.activation,
            feature_index: b.feature_index,
            parent: b.parent,
            parent_slot: b.parent_slot,
            children: b.children.clone(),
            param_start,
            has_bias,
        });
    }
    NeuralTree {
        nodes,
        weights,
        task,
        depth_cap: cfg.depth_cap,
        arity_cap: cfg.arity_cap,
        input_dim,
        rng_seed: cfg.rng_seed,
    }
}

/// Generates a stochastic tree for `task` over `input_dim` features.
///
/// The construction is a pure function of `(config, task, input_dim)`
/// including the seed: identical inputs yield an identical tree.
pub fn generate_tree<S: Scalar>(
    cfg: &TreeGenConfig,
    task: TaskKind,
    input_dim: usize,
) -> Result<NeuralTree<S>> {
    if input_dim == 0 {
        return Err(Error::Config("input_dim must be >= 1".into()));
    }
    if cfg.depth_cap < 2 {
        return Err(Error::Config("depth_cap must be >= 2".into()));
    }
    if cfg.arity_cap < 2 {
        return Err(Error::Config("arity_cap must be >= 2".into()));
    }
    if !(0.0..=1.0).contains(&cfg.leaf_prob) {
        return Err(Error::Config("leaf_prob must lie in [0, 1]".into()));
    }
    if cfg.weight_init.0 > cfg.weight_init.1 {
        return Err(Error::Config("weight_init lower bound exceeds upper".into()));
    }
    if let TaskKind::Classification { classes } = task {
        if classes < 2 {
            return Err(Error::Config("classification needs >= 2 classes".into()));
        }
    }

    let min_size = cfg.min_size.unwrap_or(task.outputs() * 2);
    let mut rng = rng::seeded_rng(cfg.rng_seed);
    let mut ctx = GenCtx {
        rng: &mut rng,
        cfg,
        input_dim,
    };

    let mut largest = 0usize;
    for _ in 0..RETRY_BUDGET {
        let build = gen_attempt(&mut ctx, task);
        if build.len() >= min_size {
            return Ok(materialize(build, task, cfg, input_dim));
        }
        largest = largest.max(build.len());
    }
    Err(Error::Generation {
        attempts: RETRY_BUDGET,
        min_size,
        largest,
    })
}

// ---------------------------------------------------------------------------
// Validation
// ---------------------------------------------------------------------------

/// A broken tree invariant, naming the offending node where one exists.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub node: Option<NodeId>,
    pub rule: String,
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self.node {
            Some(id) => write!(f, "node {id}: {}", self.rule),
            None => write!(f, "{}", self.rule),
        }
    }
}

fn violation(node: Option<NodeId>, rule: impl Into<String>) -> Violation {
    Violation {
        node,
        rule: rule.into(),
    }
}

/// Checks every structural invariant; an empty list means the tree is valid.
pub fn validate<S: Scalar>(tree: &NeuralTree<S>) -> Vec<Violation> {
    let mut out = Vec::new();
    let n = tree.node_count();
    if n == 0 {
        out.push(violation(None, "empty node store"));
        return out;
    }

    let root = tree.node(NodeId(0));
    if root.kind != NodeKind::Root {
        out.push(violation(Some(NodeId(0)), "node 0 must be the root"));
    }
    if root.parent.is_some() {
        out.push(violation(Some(NodeId(0)), "root must not have a parent"));
    }

    let mut edge_total = 0usize;
    for (id, node) in tree.nodes() {
        if id.index() > 0 && node.parent.is_none() {
            out.push(violation(Some(id), "non-root node without a parent"));
        }
        if let Some(p) = node.parent {
            if p.index() >= n {
                out.push(violation(Some(id), "parent id out of range"));
            } else {
                let parent = tree.node(p);
                let slot = node.parent_slot as usize;
                if parent.children.get(slot) != Some(&id) {
                    out.push(violation(Some(id), "parent/child link mismatch"));
                }
            }
        }
        edge_total += node.children.len();

        match node.kind {
            NodeKind::Leaf => {
                if !node.children.is_empty() {
                    out.push(violation(Some(id), "leaf with children"));
                }
                match node.feature_index {
                    None => out.push(violation(Some(id), "leaf without feature index")),
                    Some(fi) if fi as usize >= tree.input_dim() => {
                        out.push(violation(Some(id), "feature out of range"))
                    }
                    _ => {}
                }
                if node.activation.is_some() {
                    out.push(violation(Some(id), "leaf with an activation"));
                }
                if node.has_bias {
                    out.push(violation(Some(id), "leaf with a bias"));
                }
            }
            NodeKind::Internal | NodeKind::Root => {
                if node.feature_index.is_some() {
                    out.push(violation(Some(id), "non-leaf with a feature index"));
                }
                let arity = node.children.len();
                let is_class_root =
                    node.kind == NodeKind::Root && tree.task().is_classification();
                if is_class_root {
                    let r = tree.task().outputs();
                    if arity != r {
                        out.push(violation(
                            Some(id),
                            format!("classification root must have exactly {r} children, has {arity}"),
                        ));
                    }
                } else if arity < 2 || arity > tree.arity_cap() as usize {
                    out.push(violation(
                        Some(id),
                        format!("arity {arity} outside [2, {}]", tree.arity_cap()),
                    ));
                }
                match node.activation {
                    None => out.push(violation(Some(id), "non-leaf without an activation")),
                    Some(ActivationKind::ArgMax) => {
                        if !(node.kind == NodeKind::Root && tree.task().is_classification()) {
                            out.push(violation(
                                Some(id),
                                "argmax allowed only at a classification root",
                            ));
                        }
                        if node.has_bias {
                            out.push(violation(Some(id), "argmax root carries no bias"));
                        }
                    }
                    Some(_) => {
                        if !node.has_bias {
                            out.push(violation(Some(id), "activated node without a bias"));
                        }
                    }
                }
                if node.kind == NodeKind::Root && !tree.task().is_classification()
                    && node.activation != Some(ActivationKind::Sigmoid) {
                        out.push(violation(Some(id), "regression root must be sigmoid"));
                    }
            }
        }

        if tree.depth_of(id) > tree.depth_cap() {
            out.push(violation(Some(id), "node deeper than the depth cap"));
        }
    }

    if edge_total != n - 1 {
        out.push(violation(None, "edge count does not equal n - 1"));
    }
    let bound = node_count_bound_for(tree.task(), tree.depth_cap(), tree.arity_cap());
    if n > bound {
        out.push(violation(
            None,
            format!("node count {n} exceeds the bound {bound}"),
        ));
    }
    let counts = count_parameters(tree);
    if counts.total != tree.param_count() {
        out.push(violation(
            None,
            format!(
                "weight storage holds {} values, expected {}",
                tree.param_count(),
                counts.total
            ),
        ));
    }
    if tree.weights().iter().any(|w| !w.is_finite()) {
        out.push(violation(None, "non-finite parameter value"));
    }
    out
}

// ---------------------------------------------------------------------------
// Manual construction (model files and tests)
// ---------------------------------------------------------------------------

/// Builds a tree node by node. Used by model deserialization and by tests
/// that need exact shapes; the result is not validated, call [`validate`].
pub struct TreeBuilder<S: Scalar> {
    nodes: Vec<BuildNode>,
    task: TaskKind,
    depth_cap: u32,
    arity_cap: u32,
    input_dim: usize,
    rng_seed: u64,
    _marker: std::marker::PhantomData<S>,
}

impl<S: Scalar> TreeBuilder<S> {
    pub fn new(task: TaskKind, input_dim: usize, depth_cap: u32, arity_cap: u32) -> Self {
        TreeBuilder {
            nodes: Vec::new(),
            task,
            depth_cap,
            arity_cap,
            input_dim,
            rng_seed: 0,
            _marker: std::marker::PhantomData,
        }
    }

    pub fn rng_seed(mut self, seed: u64) -> Self {
        self.rng_seed = seed;
        self
    }

    /// Adds the root. Bias must be `None` exactly for an argmax root.
    pub fn root(&mut self, activation: ActivationKind, bias: Option<f64>) -> NodeId {
        assert!(self.nodes.is_empty(), "root must be the first node");
        self.nodes.push(BuildNode {
            kind: NodeKind::Root,
            activation: Some(activation),
            feature_index: None,
            parent: None,
            parent_slot: 0,
            children: Vec::new(),
            incoming: 0.0,
            bias,
        });
        NodeId(0)
    }

    pub fn internal(
        &mut self,
        parent: NodeId,
        edge_weight: f64,
        activation: ActivationKind,
        bias: f64,
    ) -> NodeId {
        let id = NodeId(self.nodes.len() as u32);
        let slot = self.nodes[parent.index()].children.len() as u32;
        self.nodes.push(BuildNode {
            kind: NodeKind::Internal,
            activation: Some(activation),
            feature_index: None,
            parent: Some(parent),
            parent_slot: slot,
            children: Vec::new(),
            incoming: edge_weight,
            bias: Some(bias),
        });
        self.nodes[parent.index()].children.push(id);
        id
    }

    pub fn leaf(&mut self, parent: NodeId, edge_weight: f64, feature_index: u32) -> NodeId {
        let id = NodeId(self.nodes.len() as u32);
        let slot = self.nodes[parent.index()].children.len() as u32;
        self.nodes.push(BuildNode {
            kind: NodeKind::Leaf,
            activation: None,
            feature_index: Some(feature_index),
            parent: Some(parent),
            parent_slot: slot,
            children: Vec::new(),
            incoming: edge_weight,
            bias: None,
        });
        self.nodes[parent.index()].children.push(id);
        id
    }

    pub fn finish(self) -> NeuralTree<S> {
        let cfg = TreeGenConfig {
            depth_cap: self.depth_cap,
            arity_cap: self.arity_cap,
            rng_seed: self.rng_seed,
            ..TreeGenConfig::default()
        };
        materialize(self.nodes, self.task, &cfg, self.input_dim)
    }
}
