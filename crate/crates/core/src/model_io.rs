//! Model files: a self-describing JSON document with exact base-2 weight
//! encoding, so serialize/deserialize round trips are lossless at full
//! binary precision.
//!
//! Layout: `{format_version, task, depth_cap, arity_cap, input_dim,
//! rng_seed, nodes: [{id, kind, activation, bias, feature_index,
//! children: [{id, weight}]}]}`. Node ids are dense with the root at 0 and
//! children reference ids; weights and biases are strings produced by
//! [`Scalar::encode_exact`].

use crate::activation::ActivationKind;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tree::{validate, NeuralTree, NodeKind, TaskKind, TreeBuilder};
use serde::{Deserialize, Serialize};
use std::path::Path;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct ChildDoc {
    id: u32,
    weight: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct NodeDoc {
    id: u32,
    kind: NodeKind,
    activation: Option<ActivationKind>,
    bias: Option<String>,
    feature_index: Option<u32>,
    children: Vec<ChildDoc>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ModelDoc {
    format_version: u32,
    task: TaskKind,
    depth_cap: u32,
    arity_cap: u32,
    input_dim: usize,
    rng_seed: u64,
    nodes: Vec<NodeDoc>,
}

/// Serializes a tree to its canonical JSON text (deterministic bytes).
pub fn serialize_tree<S: Scalar>(tree: &NeuralTree<S>) -> String {
    let nodes = tree
        .nodes()
        .map(|(id, node)| NodeDoc {
            id: id.0,
            kind: node.kind,
            activation: node.activation,
            bias: tree.bias(id).map(|b| b.encode_exact()),
            feature_index: node.feature_index,
            children: node
                .children
                .iter()
                .enumerate()
                .map(|(slot, child)| ChildDoc {
                    id: child.0,
                    weight: tree.edge_weight(id, slot).encode_exact(),
                })
                .collect(),
        })
        .collect();
    let doc = ModelDoc {
        format_version: FORMAT_VERSION,
        task: tree.task(),
        depth_cap: tree.depth_cap(),
        arity_cap: tree.arity_cap(),
        input_dim: tree.input_dim(),
        rng_seed: tree.rng_seed(),
        nodes,
    };
    let mut text = serde_json::to_string_pretty(&doc).expect("model serialization");
    text.push('\n');
    text
}

pub fn save_model<S: Scalar>(tree: &NeuralTree<S>, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path.as_ref(), serialize_tree(tree))?;
    Ok(())
}

fn decode_weight<S: Scalar>(s: &str, what: &str, id: u32) -> Result<S> {
    S::decode_exact(s)
        .ok_or_else(|| Error::ModelFormat(format!("node {id}: undecodable {what} '{s}'")))
}

/// Rebuilds a tree from model-file text, validating the structure.
pub fn deserialize_tree<S: Scalar>(text: &str) -> Result<NeuralTree<S>> {
    let doc: ModelDoc = serde_json::from_str(text)
        .map_err(|e| Error::ModelFormat(format!("json parse failed: {e}")))?;
    if doc.format_version != FORMAT_VERSION {
        return Err(Error::ModelFormat(format!(
            "format version {} not supported (expected {FORMAT_VERSION})",
            doc.format_version
        )));
    }
    let n = doc.nodes.len();
    if n == 0 {
        return Err(Error::ModelFormat("model has no nodes".into()));
    }
    let mut by_id: Vec<Option<&NodeDoc>> = vec![None; n];
    for node in &doc.nodes {
        let idx = node.id as usize;
        if idx >= n {
            return Err(Error::ModelFormat(format!(
                "node id {idx} out of range for {n} nodes"
            )));
        }
        if by_id[idx].replace(node).is_some() {
            return Err(Error::ModelFormat(format!("duplicate node id {idx}")));
        }
    }
    let by_id: Vec<&NodeDoc> = by_id.into_iter().map(|n| n.unwrap()).collect();
    let root = by_id[0];
    if root.kind != NodeKind::Root {
        return Err(Error::ModelFormat("node 0 must be the root".into()));
    }

    let mut builder: TreeBuilder<S> =
        TreeBuilder::new(doc.task, doc.input_dim, doc.depth_cap, doc.arity_cap)
            .rng_seed(doc.rng_seed);
    let root_activation = root
        .activation
        .ok_or_else(|| Error::ModelFormat("root needs an activation".into()))?;
    let root_bias = match &root.bias {
        Some(b) => Some(decode_weight::<S>(b, "bias", 0)?.to_f64()),
        None => None,
    };
    let built_root = builder.root(root_activation, root_bias);

    // Depth-first insertion in child order reproduces the writer's preorder
    // numbering, keeping serialize -> deserialize -> serialize byte-stable.
    fn insert_children<S: Scalar>(
        builder: &mut TreeBuilder<S>,
        by_id: &[&NodeDoc],
        doc_id: u32,
        built_parent: crate::tree::NodeId,
        inserted: &mut usize,
    ) -> Result<()> {
        let parent = by_id[doc_id as usize];
        for child_ref in &parent.children {
            let child = *by_id.get(child_ref.id as usize).ok_or_else(|| {
                Error::ModelFormat(format!("child id {} out of range", child_ref.id))
            })?;
            let weight = decode_weight::<S>(&child_ref.weight, "edge weight", child.id)?;
            *inserted += 1;
            match child.kind {
                NodeKind::Leaf => {
                    let fi = child.feature_index.ok_or_else(|| {
                        Error::ModelFormat(format!("leaf {} lacks feature_index", child.id))
                    })?;
                    builder.leaf(built_parent, weight.to_f64(), fi);
                }
                NodeKind::Internal => {
                    let act = child.activation.ok_or_else(|| {
                        Error::ModelFormat(format!("node {} lacks an activation", child.id))
                    })?;
                    let bias = child.bias.as_ref().ok_or_else(|| {
                        Error::ModelFormat(format!("node {} lacks a bias", child.id))
                    })?;
                    let bias = decode_weight::<S>(bias, "bias", child.id)?;
                    let built = builder.internal(built_parent, weight.to_f64(), act, bias.to_f64());
                    insert_children(builder, by_id, child.id, built, inserted)?;
                }
                NodeKind::Root => {
                    return Err(Error::ModelFormat(format!(
                        "node {} claims to be a second root",
                        child.id
                    )))
                }
            }
        }
        Ok(())
    }

    let mut inserted = 1usize;
    insert_children(&mut builder, &by_id, 0, built_root, &mut inserted)?;
    if inserted != n {
        return Err(Error::ModelFormat(format!(
            "{inserted} nodes reachable from the root, file holds {n}"
        )));
    }
    let tree = builder.finish();
    let violations = validate(&tree);
    if !violations.is_empty() {
        return Err(Error::ModelFormat(format!(
            "model violates tree invariants: {}",
            violations
                .iter()
                .map(|v| v.to_string())
                .collect::<Vec<_>>()
                .join("; ")
        )));
    }
    Ok(tree)
}

pub fn load_model<S: Scalar>(path: impl AsRef<Path>) -> Result<NeuralTree<S>> {
    let text = std::fs::read_to_string(path.as_ref())?;
    deserialize_tree(&text)
}
