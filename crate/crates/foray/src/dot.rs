//! GraphViz rendering of token flow graphs.

use foray_core::tfg::{Node, TokenFlowGraph};

pub fn graph_dot(graph: &TokenFlowGraph) -> String {
    let mut out = String::from("digraph tfg {\n  rankdir=LR;\n");
    for node in &graph.nodes {
        let shape = match node {
            Node::Epsilon => "doublecircle",
            Node::Token(_) => "ellipse",
        };
        out.push_str(&format!("  \"{node}\" [shape={shape}];\n"));
    }
    for edge in &graph.edges {
        out.push_str(&format!(
            "  \"{}\" -> \"{}\" [label=\"{}\", tooltip=\"{}\"];\n",
            edge.src,
            edge.dst,
            graph.display_label(edge.id),
            edge.constraint,
        ));
    }
    out.push_str("}\n");
    out
}
