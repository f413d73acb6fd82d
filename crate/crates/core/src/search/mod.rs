//! Pathway beam search over the expansion hypergraph.
//!
//! A pathway is a set of arcs forming a tree under the target. Each phase
//! expands every unexpanded frontier molecule of every open pathway, forks
//! one child per (frontier molecule, arc) pair, merges children with the
//! same arc set and keeps the best `n_beams` open children.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::expand::{ExpandError, ExpansionConfig, ExpansionContext, TraceRecord};
use crate::gateway::{ComplexityModel, ModelSuite};
use crate::graph::{ArcId, HyperGraph, NodeId, NodeInit};
use crate::smiles::{CanonicalSmiles, Normalizer};
use crate::stock::StockSet;

pub mod score;

pub use score::{arc_score, simplicity, simplicity_from_sc, SurrogateComplexity, SIMPLICITY_FLOOR};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SearchConfig {
    /// Open pathways kept after each phase.
    pub n_beams: usize,
    /// Expansion phases (equal to the arc count of a pathway).
    pub max_steps: usize,
    pub expansion: ExpansionConfig,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self { n_beams: 10, max_steps: 6, expansion: ExpansionConfig::default() }
    }
}

impl SearchConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.n_beams == 0 {
            return Err("beam width must be at least 1".into());
        }
        if self.max_steps == 0 {
            return Err("max steps must be at least 1".into());
        }
        self.expansion.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PathwayStatus {
    Open,
    /// Every reactant leaf is in stock.
    Solved,
    MaxSteps,
    /// A frontier molecule has no usable arc.
    Dead,
    /// A frontier molecule's only accepted candidates would have closed a cycle.
    Cyclic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pathway {
    /// Breadth-first from the target.
    pub arcs: Vec<ArcId>,
    /// Reactant leaves not in stock.
    pub frontier: BTreeSet<NodeId>,
    pub score: f64,
    pub steps: usize,
    pub status: PathwayStatus,
}

impl Pathway {
    fn root(g: &HyperGraph) -> Self {
        let mut p = Self { arcs: Vec::new(), frontier: BTreeSet::new(), score: 1.0, steps: 0, status: PathwayStatus::Open };
        p.refresh(g);
        p
    }

    /// Recomputes order, frontier and score from the arc set.
    fn refresh(&mut self, g: &HyperGraph) {
        let tree = g.extract_route(&self.arcs).expect("forks keep pathways tree-shaped");
        self.arcs = tree.arcs;
        self.frontier = tree.reactant_leaves.into_iter().filter(|&n| !g.node(n).in_stock).collect();
        self.score = pathway_score(g, &self.arcs);
        self.steps = self.arcs.len();
    }

    fn fork(&self, g: &HyperGraph, arc: ArcId) -> Self {
        let mut child = self.clone();
        child.arcs.push(arc);
        child.refresh(g);
        child
    }

    pub fn is_solved(&self) -> bool {
        self.status == PathwayStatus::Solved
    }
}

/// Product of the stored arc scores, in the given order; 1 for no arcs.
pub fn pathway_score(g: &HyperGraph, arcs: &[ArcId]) -> f64 {
    arcs.iter().map(|&a| g.arc(a).meta.arc_score).product()
}

/// Ranking used for pruning and output: score descending, fewer steps,
/// then the arc list.
pub fn rank_cmp(a: &Pathway, b: &Pathway) -> std::cmp::Ordering {
    b.score.total_cmp(&a.score).then(a.steps.cmp(&b.steps)).then_with(|| a.arcs.cmp(&b.arcs))
}

/// Status of a pathway whose frontier molecules have all been expanded
/// where possible. `cycle_only(n)` tells whether `n` lost every accepted
/// candidate to the cycle check.
pub fn terminate_check(
    g: &HyperGraph,
    p: &Pathway,
    cfg: &SearchConfig,
    cycle_only: impl Fn(NodeId) -> bool,
) -> PathwayStatus {
    if p.frontier.is_empty() {
        return PathwayStatus::Solved;
    }
    if p.steps >= cfg.max_steps {
        return PathwayStatus::MaxSteps;
    }
    let stuck = |n: &NodeId| {
        let node = g.node(*n);
        g.producers(*n).is_empty() && (node.expanded || !node.expandable)
    };
    match p.frontier.iter().find(|n| stuck(n)) {
        Some(&n) if cycle_only(n) => PathwayStatus::Cyclic,
        Some(_) => PathwayStatus::Dead,
        None => PathwayStatus::Open,
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchStats {
    pub phases: usize,
    pub expansions: usize,
    pub arcs: usize,
    pub cycle_rejected: usize,
    pub pruned: usize,
    pub model_errors: usize,
    pub scorer_failures: usize,
}

pub struct SearchResult {
    /// Terminated pathways, best first.
    pub pathways: Vec<Pathway>,
    pub graph: HyperGraph,
    pub stats: SearchStats,
    pub trace: Vec<TraceRecord>,
}

impl SearchResult {
    pub fn solved(&self) -> impl Iterator<Item = &Pathway> {
        self.pathways.iter().filter(|p| p.is_solved())
    }
}

/// Plans routes for `target`, which must already be normalized.
pub fn beam_search(
    target: &CanonicalSmiles,
    cfg: &SearchConfig,
    models: &ModelSuite,
    normalizer: Arc<dyn Normalizer>,
    stock: &StockSet,
    scorer: &dyn ComplexityModel,
) -> SearchResult {
    let ctx = ExpansionContext::new(models.clone(), normalizer, cfg.expansion.clone());
    search_with(target, cfg, &ctx, stock, scorer)
}

pub fn search_with(
    target: &CanonicalSmiles,
    cfg: &SearchConfig,
    ctx: &ExpansionContext,
    stock: &StockSet,
    scorer: &dyn ComplexityModel,
) -> SearchResult {
    let mut stats = SearchStats::default();
    let mut init = |m: &CanonicalSmiles| {
        let s = simplicity(m, scorer);
        if s.is_none() {
            stats.scorer_failures += 1;
        }
        NodeInit { in_stock: stock.contains(m), simplicity: s.unwrap_or(SIMPLICITY_FLOOR), expandable: s.is_some() }
    };
    let root_init = init(target);
    let mut g = HyperGraph::new(target.clone(), root_init);
    let mut trace = Vec::new();
    let mut cycle_rejected: HashMap<NodeId, usize> = HashMap::new();
    let mut terminated = Vec::new();

    let root = Pathway::root(&g);
    let mut open = Vec::new();
    if root.frontier.is_empty() {
        terminated.push(Pathway { status: PathwayStatus::Solved, ..root });
    } else {
        open.push(root);
    }

    while !open.is_empty() {
        stats.phases += 1;

        // (1) expand every unexpanded frontier molecule of a live pathway.
        let pending: Vec<NodeId> = open
            .iter()
            .flat_map(|p| p.frontier.iter().copied())
            .filter(|&n| !g.node(n).expanded && g.node(n).expandable)
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let targets: Vec<CanonicalSmiles> = pending.iter().map(|&n| g.node(n).smiles.clone()).collect();
        let proposals = ctx.map(targets, |t| ctx.propose(&t));
        for (node, proposal) in pending.into_iter().zip(proposals) {
            stats.expansions += 1;
            match ctx.commit(&mut g, node, proposal, &mut init) {
                Ok(e) => {
                    stats.arcs += e.arcs.len();
                    stats.cycle_rejected += e.cycle_rejected;
                    if e.cycle_rejected > 0 {
                        cycle_rejected.insert(node, e.cycle_rejected);
                    }
                    trace.extend(e.trace);
                }
                Err(ExpandError::Model(err)) => {
                    log::warn!("expansion of {} failed: {err}", g.node(node).smiles);
                    stats.model_errors += 1;
                    g.mark_unexpandable(node);
                }
                Err(e) => unreachable!("pending nodes are unexpanded and expandable: {e}"),
            }
        }

        // (2) fork one child per new arc on each live pathway.
        let mut children: BTreeMap<BTreeSet<ArcId>, Pathway> = BTreeMap::new();
        for p in open.drain(..) {
            let status = terminate_check(&g, &p, cfg, |n| {
                cycle_rejected.contains_key(&n) && g.producers(n).is_empty()
            });
            if status != PathwayStatus::Open {
                terminated.push(Pathway { status, ..p });
                continue;
            }
            for &n in &p.frontier {
                for &a in g.producers(n) {
                    let key: BTreeSet<ArcId> = p.arcs.iter().copied().chain([a]).collect();
                    children.entry(key).or_insert_with(|| p.fork(&g, a));
                }
            }
        }

        // (3) classify the children, (4) prune the open ones.
        for mut child in children.into_values() {
            if child.frontier.is_empty() {
                child.status = PathwayStatus::Solved;
                terminated.push(child);
            } else if child.steps >= cfg.max_steps {
                child.status = PathwayStatus::MaxSteps;
                terminated.push(child);
            } else {
                open.push(child);
            }
        }
        open.sort_by(rank_cmp);
        if open.len() > cfg.n_beams {
            stats.pruned += open.len() - cfg.n_beams;
            open.truncate(cfg.n_beams);
        }
    }

    terminated.sort_by(rank_cmp);
    SearchResult { pathways: terminated, graph: g, stats, trace }
}
