//! Graphviz export of a tree's structure.
//!
//! Styling mirrors the usual rendering of these models: the root is black,
//! class-subtree roots are red, internal function nodes are blue circles
//! labeled with their activation, and leaves are green boxes labeled with
//! their input feature (`x3`).

use crate::scalar::Scalar;
use crate::tree::{NeuralTree, NodeKind};
use std::fmt::Write;

pub fn export_dot<S: Scalar>(tree: &NeuralTree<S>) -> String {
    let mut out = String::new();
    out.push_str("digraph neural_tree {\n");
    out.push_str("  rankdir=TB;\n");
    out.push_str("  node [fontname=\"Helvetica\"];\n");
    let root_children = &tree.node(tree.root()).children;
    for (id, node) in tree.nodes() {
        let line = match node.kind {
            NodeKind::Root => format!(
                "  n{} [label=\"{}\", shape=doublecircle, style=filled, \
                 fillcolor=black, fontcolor=white];",
                id,
                node.activation.expect("root activation")
            ),
            NodeKind::Internal => {
                let is_class = tree.task().is_classification()
                    && node.parent == Some(tree.root())
                    && root_children.contains(&id);
                let color = if is_class { "indianred" } else { "steelblue" };
                format!(
                    "  n{} [label=\"{}\", shape=circle, style=filled, fillcolor={color}];",
                    id,
                    node.activation.expect("internal activation")
                )
            }
            NodeKind::Leaf => format!(
                "  n{} [label=\"x{}\", shape=box, style=filled, fillcolor=palegreen];",
                id,
                node.feature_index.expect("leaf feature")
            ),
        };
        out.push_str(&line);
        out.push('\n');
    }
    for (id, node) in tree.nodes() {
        for &child in &node.children {
            writeln!(out, "  n{id} -> n{child};").expect("string write");
        }
    }
    out.push_str("}\n");
    out
}
