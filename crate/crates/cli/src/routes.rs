//! Route output document written by `plan` and read back by `export`.

use hyperretro::graph::Acceptance;
use hyperretro::search::{Pathway, PathwayStatus, SearchStats};
use hyperretro::{ArcId, HyperGraph, NodeId};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RouteStep {
    pub arc: ArcId,
    pub product: String,
    pub precursors: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub reagents: Vec<String>,
    pub likelihood: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub runner_up: Option<f64>,
    pub acceptance: Acceptance,
    pub class: String,
    pub arc_score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Route {
    pub rank: usize,
    pub status: PathwayStatus,
    pub score: f64,
    pub n_steps: usize,
    pub steps: Vec<RouteStep>,
    /// Reactant leaves.
    pub leaves: Vec<String>,
    /// Leaves still missing from the stock.
    pub frontier: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metadata {
    pub tool: String,
    pub version: String,
    pub started_unix: u64,
    pub elapsed_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RouteDocument {
    pub target: String,
    pub routes: Vec<Route>,
    pub stats: SearchStats,
    /// Effective run settings.
    pub config: serde_json::Value,
    pub metadata: Metadata,
}

fn smiles(g: &HyperGraph, n: NodeId) -> String {
    g.node(n).smiles.as_str().to_owned()
}

pub fn route(g: &HyperGraph, rank: usize, p: &Pathway) -> Route {
    let tree = g.extract_route(&p.arcs).expect("pathways are trees");
    let steps = p
        .arcs
        .iter()
        .map(|&a| {
            let arc = g.arc(a);
            RouteStep {
                arc: a,
                product: smiles(g, arc.product),
                precursors: arc.reactants().map(|n| smiles(g, n)).collect(),
                reagents: arc.meta.reagents.iter().map(|&n| smiles(g, n)).collect(),
                likelihood: arc.meta.forward_likelihood,
                runner_up: arc.meta.runner_up,
                acceptance: arc.meta.acceptance,
                class: arc.meta.reaction_class.code(),
                arc_score: arc.meta.arc_score,
            }
        })
        .collect();
    Route {
        rank,
        status: p.status,
        score: p.score,
        n_steps: p.steps,
        steps,
        leaves: tree.reactant_leaves.iter().map(|&n| smiles(g, n)).collect(),
        frontier: p.frontier.iter().map(|&n| smiles(g, n)).collect(),
    }
}

/// The document without its `metadata` block, for comparing runs.
pub fn without_metadata(doc_json: &str) -> serde_json::Result<serde_json::Value> {
    let mut v: serde_json::Value = serde_json::from_str(doc_json)?;
    if let Some(obj) = v.as_object_mut() {
        obj.remove("metadata");
    }
    Ok(v)
}
