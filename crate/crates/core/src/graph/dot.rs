use std::collections::BTreeSet;
use std::fmt::Write;

use super::{ArcId, HyperGraph, RouteTree};

fn escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"")
}

impl HyperGraph {
    /// Graphviz rendering. Molecules are ellipses; each reaction is a small
    /// square junction with edges from its precursors and one edge to its
    /// product. Arcs of `highlight` are drawn red.
    pub fn to_dot(&self, highlight: Option<&RouteTree>) -> String {
        let on_route: BTreeSet<ArcId> = highlight.map(|t| t.arcs.iter().copied().collect()).unwrap_or_default();
        let mut out = String::from("digraph hypergraph {\n  rankdir=BT;\n  node [fontname=\"monospace\"];\n");
        for (id, n) in self.nodes() {
            let fill = if id == self.root {
                "plum"
            } else if n.in_stock {
                "palegreen"
            } else if !n.expandable {
                "lightgray"
            } else {
                "white"
            };
            let _ = writeln!(
                out,
                "  {id} [shape=ellipse, style=filled, fillcolor={fill}, label=\"{}\"];",
                escape(n.smiles.as_str())
            );
        }
        for arc in &self.arcs {
            let color = if on_route.contains(&arc.id) { "red" } else { "black" };
            let _ = writeln!(
                out,
                "  {} [shape=square, width=0.12, height=0.12, fixedsize=true, label=\"\", style=filled, fillcolor={color}, tooltip=\"{} p={:.3}\"];",
                arc.id, arc.meta.reaction_class, arc.meta.forward_likelihood
            );
            for &p in &arc.precursors {
                let style = if arc.is_reagent(p) { ", style=dashed" } else { "" };
                let _ = writeln!(out, "  {p} -> {} [arrowhead=none, color={color}{style}];", arc.id);
            }
            let _ = writeln!(out, "  {} -> {} [color={color}];", arc.id, arc.product);
        }
        out.push_str("}\n");
        out
    }
}
