use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{Acceptance, ArcMeta, GraphError, HyperGraph, NodeId, NodeInit};
use crate::gateway::ReactionClass;
use crate::smiles::CanonicalSmiles;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeRecord {
    pub id: u32,
    pub smiles: String,
    pub in_stock: bool,
    pub simplicity: f64,
    #[serde(default)]
    pub expanded: bool,
    #[serde(default = "yes")]
    pub expandable: bool,
}

fn yes() -> bool {
    true
}

fn auto() -> Acceptance {
    Acceptance::Auto
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArcRecord {
    pub id: u32,
    pub product: u32,
    pub precursors: Vec<u32>,
    pub likelihood: f64,
    /// `superclass.category.named_reaction`.
    pub class: String,
    pub score: f64,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub class_label: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub reagents: Vec<u32>,
    #[serde(default = "auto")]
    pub acceptance: Acceptance,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub runner_up: Option<f64>,
}

/// Serializable form of a [`HyperGraph`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphSnapshot {
    pub root: u32,
    pub nodes: Vec<NodeRecord>,
    pub arcs: Vec<ArcRecord>,
}

#[derive(Debug, Error)]
pub enum SnapshotError {
    #[error("snapshot JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("node ids must be 0..n in order; found {found} at position {position}")]
    NodeOrder { position: usize, found: u32 },
    #[error("arc ids must be 0..m in order; found {found} at position {position}")]
    ArcOrder { position: usize, found: u32 },
    #[error("duplicate molecule {0}")]
    DuplicateMolecule(String),
    #[error("root {0} is not a node")]
    BadRoot(u32),
    #[error("arc {arc}: bad class: {reason}")]
    BadClass { arc: u32, reason: String },
    #[error("arc {arc}: {source}")]
    Arc { arc: u32, source: GraphError },
}

impl HyperGraph {
    pub fn to_snapshot(&self) -> GraphSnapshot {
        GraphSnapshot {
            root: self.root.0,
            nodes: self
                .nodes()
                .map(|(id, n)| NodeRecord {
                    id: id.0,
                    smiles: n.smiles.as_str().to_owned(),
                    in_stock: n.in_stock,
                    simplicity: n.simplicity,
                    expanded: n.expanded,
                    expandable: n.expandable,
                })
                .collect(),
            arcs: self
                .arcs
                .iter()
                .map(|a| ArcRecord {
                    id: a.id.0,
                    product: a.product.0,
                    precursors: a.precursors.iter().map(|p| p.0).collect(),
                    likelihood: a.meta.forward_likelihood,
                    class: a.meta.reaction_class.code(),
                    score: a.meta.arc_score,
                    class_label: a.meta.reaction_class.label.clone(),
                    reagents: a.meta.reagents.iter().map(|p| p.0).collect(),
                    acceptance: a.meta.acceptance,
                    runner_up: a.meta.runner_up,
                })
                .collect(),
        }
    }

    /// Rebuilds a graph, replaying arcs in id order so reachability and the
    /// cycle check are re-derived rather than trusted.
    pub fn from_snapshot(s: &GraphSnapshot) -> Result<Self, SnapshotError> {
        for (position, n) in s.nodes.iter().enumerate() {
            if n.id as usize != position {
                return Err(SnapshotError::NodeOrder { position, found: n.id });
            }
        }
        if s.root as usize >= s.nodes.len() {
            return Err(SnapshotError::BadRoot(s.root));
        }
        let init = |n: &NodeRecord| NodeInit { in_stock: n.in_stock, simplicity: n.simplicity, expandable: n.expandable };
        let mut g = HyperGraph::empty();
        for n in &s.nodes {
            let m = CanonicalSmiles::from_normalized(n.smiles.clone());
            let before = g.node_count();
            let id = g.get_or_insert_node_with(m, |_| init(n));
            if g.node_count() == before {
                return Err(SnapshotError::DuplicateMolecule(n.smiles.clone()));
            }
            if n.expanded {
                g.mark_expanded(id);
            }
        }
        g.root = NodeId(s.root);

        for (position, a) in s.arcs.iter().enumerate() {
            if a.id as usize != position {
                return Err(SnapshotError::ArcOrder { position, found: a.id });
            }
            let mut reaction_class: ReactionClass =
                a.class.parse().map_err(|reason| SnapshotError::BadClass { arc: a.id, reason })?;
            reaction_class.label = a.class_label.clone();
            let meta = ArcMeta {
                forward_likelihood: a.likelihood,
                runner_up: a.runner_up,
                acceptance: a.acceptance,
                reaction_class,
                arc_score: a.score,
                reagents: a.reagents.iter().map(|&r| NodeId(r)).collect::<BTreeSet<_>>(),
            };
            let precursors: Vec<NodeId> = a.precursors.iter().map(|&p| NodeId(p)).collect();
            g.attach_arc(NodeId(a.product), &precursors, meta)
                .map_err(|source| SnapshotError::Arc { arc: a.id, source })?;
        }
        Ok(g)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_snapshot()).expect("snapshot serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, SnapshotError> {
        Self::from_snapshot(&serde_json::from_str(text)?)
    }
}

#[cfg(test)]
mod tests {
    use super::super::tests::meta;
    use super::*;

    fn c(s: &str) -> CanonicalSmiles {
        CanonicalSmiles::from_normalized(s)
    }

    fn sample() -> HyperGraph {
        let mut g = HyperGraph::new(c("CCO"), NodeInit { in_stock: false, simplicity: 0.4, expandable: true });
        let a = g.get_or_insert_node_with(c("CC"), |_| NodeInit { in_stock: true, simplicity: 0.9, expandable: true });
        let b = g.get_or_insert_node(c("O"));
        let s = g.get_or_insert_node(c("[Na+]"));
        let mut m = meta();
        m.forward_likelihood = 0.8123456789012345;
        m.acceptance = Acceptance::Selective;
        m.runner_up = Some(0.1);
        m.reaction_class = "3.1.4".parse().unwrap();
        m.reaction_class.label = "coupling".into();
        m.reagents.insert(s);
        m.arc_score = 0.3;
        g.attach_arc(g.root(), &[b, a, s], m).unwrap();
        g.mark_expanded(g.root());
        g.mark_unexpandable(b);
        g
    }

    #[test]
    fn json_round_trip_is_exact() {
        let g = sample();
        let back = HyperGraph::from_json(&g.to_json()).unwrap();
        assert_eq!(back.to_snapshot(), g.to_snapshot());
        assert_eq!(back.arcs(), g.arcs());
        assert_eq!(back.lookup(&c("O")), g.lookup(&c("O")));
        assert!(back.would_create_cycle(NodeId(1), &[back.root()]));
    }

    #[test]
    fn minimal_schema_parses() {
        let text = r#"{"root":0,
            "nodes":[{"id":0,"smiles":"C","in_stock":false,"simplicity":1.0},
                     {"id":1,"smiles":"O","in_stock":true,"simplicity":1.0}],
            "arcs":[{"id":0,"product":0,"precursors":[1],"likelihood":0.9,"class":"0.0.0","score":0.9}]}"#;
        let g = HyperGraph::from_json(text).unwrap();
        assert_eq!(g.arc(super::super::ArcId(0)).meta.acceptance, Acceptance::Auto);
        assert!(g.node(NodeId(1)).expandable);
    }

    #[test]
    fn rejects_bad_snapshots() {
        let mut s = sample().to_snapshot();
        s.arcs.push(ArcRecord { id: 1, product: 1, precursors: vec![0], ..s.arcs[0].clone() });
        s.arcs[1].reagents.clear();
        assert!(matches!(HyperGraph::from_snapshot(&s), Err(SnapshotError::Arc { arc: 1, .. })));

        let mut s = sample().to_snapshot();
        s.nodes[2].smiles = "CC".into();
        assert!(matches!(HyperGraph::from_snapshot(&s), Err(SnapshotError::DuplicateMolecule(_))));

        let mut s = sample().to_snapshot();
        s.root = 17;
        assert!(matches!(HyperGraph::from_snapshot(&s), Err(SnapshotError::BadRoot(17))));
    }
}
