//! Directed acyclic hypergraph of molecules (nodes) and reactions
//! (hyper-arcs from a precursor set to one product).
//!
//! Every node keeps a bitset of the nodes reachable from it in the retro
//! direction (product to precursor). Attaching `product <- precursors` would
//! close a loop exactly when `product` is already reachable from one of the
//! precursors, so the check is a handful of bit lookups.

use std::collections::{BTreeSet, HashMap, VecDeque};
use std::fmt;

use fixedbitset::FixedBitSet;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gateway::ReactionClass;
use crate::smiles::CanonicalSmiles;

mod dot;
mod snapshot;

pub use snapshot::{ArcRecord, GraphSnapshot, NodeRecord, SnapshotError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ArcId(pub u32);

impl NodeId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl ArcId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "n{}", self.0)
    }
}

impl fmt::Display for ArcId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "a{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MoleculeNode {
    pub smiles: CanonicalSmiles,
    pub in_stock: bool,
    /// `s(X)` in `[0, 1]`.
    pub simplicity: f64,
    pub expanded: bool,
    pub expandable: bool,
}

/// Attributes of a node created by [`HyperGraph::get_or_insert_node_with`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NodeInit {
    pub in_stock: bool,
    pub simplicity: f64,
    pub expandable: bool,
}

impl Default for NodeInit {
    fn default() -> Self {
        Self { in_stock: false, simplicity: 1.0, expandable: true }
    }
}

/// Which filter branch accepted an arc.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Acceptance {
    /// Likelihood above the auto-accept threshold.
    Auto,
    /// Forward top-1 is the product and beats top-2 by the selectivity gap.
    Selective,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ArcMeta {
    pub forward_likelihood: f64,
    /// Likelihood of the forward top-2 product, for selective arcs.
    pub runner_up: Option<f64>,
    pub acceptance: Acceptance,
    pub reaction_class: ReactionClass,
    pub arc_score: f64,
    /// Precursors acting as reagents; a subset of the arc's precursors.
    pub reagents: BTreeSet<NodeId>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReactionArc {
    pub id: ArcId,
    pub product: NodeId,
    /// Sorted, deduplicated, never contains `product`.
    pub precursors: Vec<NodeId>,
    pub meta: ArcMeta,
}

impl ReactionArc {
    pub fn is_reagent(&self, node: NodeId) -> bool {
        self.meta.reagents.contains(&node)
    }

    pub fn reactants(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.precursors.iter().copied().filter(|n| !self.meta.reagents.contains(n))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GraphError {
    #[error("arc has no precursors")]
    EmptyPrecursors,
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
    #[error("reagent {0} is not one of the arc's precursors")]
    StrayReagent(NodeId),
    #[error("arc into {product} would close a cycle")]
    CycleRejected { product: NodeId },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TreeDefect {
    UnknownArc(ArcId),
    /// Node produced by more than one selected arc.
    MultiParent(NodeId),
    /// Selected arc not reachable from the root.
    Disconnected(ArcId),
    Cycle(NodeId),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("arc set is not a rooted hyper-tree: {0:?}")]
pub struct NotATree(pub TreeDefect);

/// A rooted hyper-tree: each node is produced by at most one selected arc
/// and every arc hangs off the root.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RouteTree {
    pub root: NodeId,
    /// Breadth-first from the root, precursors visited in id order.
    pub arcs: Vec<ArcId>,
    /// Nodes of the tree not produced by a selected arc.
    pub leaves: BTreeSet<NodeId>,
    /// Leaves that some selected arc (or the root itself) needs as a
    /// reactant rather than only as a reagent.
    pub reactant_leaves: BTreeSet<NodeId>,
}

#[derive(Debug, Clone)]
pub struct HyperGraph {
    nodes: Vec<MoleculeNode>,
    arcs: Vec<ReactionArc>,
    root: NodeId,
    index: HashMap<CanonicalSmiles, NodeId>,
    /// `reach[n]`: nodes reachable from `n` through product -> precursor steps.
    reach: Vec<FixedBitSet>,
    /// Arcs producing each node, in attachment order.
    producers: Vec<Vec<ArcId>>,
}

impl HyperGraph {
    fn empty() -> Self {
        Self {
            nodes: Vec::new(),
            arcs: Vec::new(),
            root: NodeId(0),
            index: HashMap::new(),
            reach: Vec::new(),
            producers: Vec::new(),
        }
    }

    pub fn new(root: CanonicalSmiles, init: NodeInit) -> Self {
        let mut g = Self::empty();
        g.root = g.get_or_insert_node_with(root, |_| init);
        g
    }

    pub fn root(&self) -> NodeId {
        self.root
    }

    pub fn node(&self, id: NodeId) -> &MoleculeNode {
        &self.nodes[id.index()]
    }

    pub fn arc(&self, id: ArcId) -> &ReactionArc {
        &self.arcs[id.index()]
    }

    pub fn nodes(&self) -> impl Iterator<Item = (NodeId, &MoleculeNode)> {
        self.nodes.iter().enumerate().map(|(i, n)| (NodeId(i as u32), n))
    }

    pub fn arcs(&self) -> &[ReactionArc] {
        &self.arcs
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn arc_count(&self) -> usize {
        self.arcs.len()
    }

    pub fn lookup(&self, m: &CanonicalSmiles) -> Option<NodeId> {
        self.index.get(m).copied()
    }

    /// Arcs whose product is `node`.
    pub fn producers(&self, node: NodeId) -> &[ArcId] {
        &self.producers[node.index()]
    }

    /// Idempotent: the same molecule always maps to the same node.
    pub fn get_or_insert_node(&mut self, m: CanonicalSmiles) -> NodeId {
        self.get_or_insert_node_with(m, |_| NodeInit::default())
    }

    /// Like [`Self::get_or_insert_node`]; `init` runs only for new nodes.
    pub fn get_or_insert_node_with(
        &mut self,
        m: CanonicalSmiles,
        init: impl FnOnce(&CanonicalSmiles) -> NodeInit,
    ) -> NodeId {
        if let Some(&id) = self.index.get(&m) {
            return id;
        }
        let id = NodeId(u32::try_from(self.nodes.len()).expect("fewer than 2^32 nodes"));
        let NodeInit { in_stock, simplicity, expandable } = init(&m);
        self.index.insert(m.clone(), id);
        self.nodes.push(MoleculeNode { smiles: m, in_stock, simplicity, expanded: false, expandable });
        self.reach.push(FixedBitSet::new());
        self.producers.push(Vec::new());
        id
    }

    pub fn mark_expanded(&mut self, id: NodeId) {
        self.nodes[id.index()].expanded = true;
    }

    pub fn mark_unexpandable(&mut self, id: NodeId) {
        self.nodes[id.index()].expandable = false;
    }

    /// True iff `product` can already be reached from one of `precursors`
    /// (or is one of them), i.e. the arc would close a cycle.
    pub fn would_create_cycle(&self, product: NodeId, precursors: &[NodeId]) -> bool {
        precursors.iter().any(|&p| p == product || self.reach[p.index()].contains(product.index()))
    }

    pub fn attach_arc(
        &mut self,
        product: NodeId,
        precursors: &[NodeId],
        meta: ArcMeta,
    ) -> Result<ArcId, GraphError> {
        if precursors.is_empty() {
            return Err(GraphError::EmptyPrecursors);
        }
        for &n in precursors.iter().chain([&product]) {
            if n.index() >= self.nodes.len() {
                return Err(GraphError::UnknownNode(n));
            }
        }
        if let Some(&r) = meta.reagents.iter().find(|r| !precursors.contains(r)) {
            return Err(GraphError::StrayReagent(r));
        }
        if self.would_create_cycle(product, precursors) {
            return Err(GraphError::CycleRejected { product });
        }

        let mut precursors = precursors.to_vec();
        precursors.sort_unstable();
        precursors.dedup();

        let mut gained = FixedBitSet::with_capacity(self.nodes.len());
        for &p in &precursors {
            gained.insert(p.index());
            gained.union_with(&self.reach[p.index()]);
        }
        for x in 0..self.nodes.len() {
            if x == product.index() || self.reach[x].contains(product.index()) {
                self.reach[x].union_with(&gained);
            }
        }

        let id = ArcId(u32::try_from(self.arcs.len()).expect("fewer than 2^32 arcs"));
        self.producers[product.index()].push(id);
        self.arcs.push(ReactionArc { id, product, precursors, meta });
        debug_assert!(self.is_acyclic(), "incremental reachability missed a cycle");
        Ok(id)
    }

    /// From-scratch acyclicity check (Kahn's algorithm over the retro edges).
    pub fn is_acyclic(&self) -> bool {
        let n = self.nodes.len();
        let mut indegree = vec![0usize; n];
        for arc in &self.arcs {
            for p in &arc.precursors {
                indegree[p.index()] += 1;
            }
        }
        let mut queue: VecDeque<usize> = (0..n).filter(|&i| indegree[i] == 0).collect();
        let mut seen = 0;
        while let Some(i) = queue.pop_front() {
            seen += 1;
            for a in &self.producers[i] {
                for p in &self.arcs[a.index()].precursors {
                    indegree[p.index()] -= 1;
                    if indegree[p.index()] == 0 {
                        queue.push_back(p.index());
                    }
                }
            }
        }
        seen == n
    }

    /// Validates that `arcs` form a hyper-tree rooted at the graph root.
    pub fn extract_route(&self, arcs: &[ArcId]) -> Result<RouteTree, NotATree> {
        let mut chosen: HashMap<NodeId, ArcId> = HashMap::with_capacity(arcs.len());
        for &a in arcs {
            let arc = self.arcs.get(a.index()).ok_or(NotATree(TreeDefect::UnknownArc(a)))?;
            match chosen.insert(arc.product, a) {
                Some(prev) if prev != a => return Err(NotATree(TreeDefect::MultiParent(arc.product))),
                _ => {}
            }
        }

        // Depth-first walk for cycle detection, recording breadth-first order
        // separately so output order matches the documented traversal.
        #[derive(Clone, Copy, PartialEq)]
        enum Mark {
            Open,
            Done,
        }
        let mut marks: HashMap<NodeId, Mark> = HashMap::new();
        let mut reagent_only: BTreeSet<NodeId> = BTreeSet::new();
        let mut reactant_use: BTreeSet<NodeId> = BTreeSet::from([self.root]);
        let mut stack = vec![(self.root, false)];
        while let Some((node, leaving)) = stack.pop() {
            if leaving {
                marks.insert(node, Mark::Done);
                continue;
            }
            match marks.get(&node) {
                Some(Mark::Open) => return Err(NotATree(TreeDefect::Cycle(node))),
                Some(Mark::Done) => continue,
                None => {}
            }
            marks.insert(node, Mark::Open);
            stack.push((node, true));
            if let Some(&a) = chosen.get(&node) {
                let arc = &self.arcs[a.index()];
                for &p in arc.precursors.iter().rev() {
                    if arc.is_reagent(p) {
                        reagent_only.insert(p);
                    } else {
                        reactant_use.insert(p);
                    }
                    if marks.get(&p) == Some(&Mark::Open) {
                        return Err(NotATree(TreeDefect::Cycle(p)));
                    }
                    stack.push((p, false));
                }
            }
        }

        let mut order = Vec::with_capacity(chosen.len());
        let mut queue = VecDeque::from([self.root]);
        let mut visited = BTreeSet::from([self.root]);
        let mut leaves = BTreeSet::new();
        while let Some(node) = queue.pop_front() {
            match chosen.get(&node) {
                Some(&a) => {
                    order.push(a);
                    for &p in &self.arcs[a.index()].precursors {
                        if visited.insert(p) {
                            queue.push_back(p);
                        }
                    }
                }
                None => {
                    leaves.insert(node);
                }
            }
        }
        if order.len() != chosen.len() {
            let stray = arcs.iter().copied().find(|a| !order.contains(a)).expect("some arc unreached");
            return Err(NotATree(TreeDefect::Disconnected(stray)));
        }
        let reactant_leaves = leaves.iter().copied().filter(|n| reactant_use.contains(n)).collect();
        Ok(RouteTree { root: self.root, arcs: order, leaves, reactant_leaves })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(s: &str) -> CanonicalSmiles {
        CanonicalSmiles::from_normalized(s)
    }

    pub(crate) fn meta() -> ArcMeta {
        ArcMeta {
            forward_likelihood: 1.0,
            runner_up: None,
            acceptance: Acceptance::Auto,
            reaction_class: ReactionClass::unrecognized(),
            arc_score: 1.0,
            reagents: BTreeSet::new(),
        }
    }

    #[test]
    fn node_dedup() {
        let mut g = HyperGraph::new(c("R"), NodeInit::default());
        let a = g.get_or_insert_node(c("A"));
        assert_eq!(g.get_or_insert_node(c("A")), a);
        let b = g.get_or_insert_node(c("B"));
        assert_ne!(a, b);
        assert_eq!(g.get_or_insert_node(c("R")), g.root());
    }

    #[test]
    fn random_inserts_match_set_cardinality() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut g = HyperGraph::new(c("root"), NodeInit::default());
        let mut distinct = BTreeSet::from(["root".to_string()]);
        for _ in 0..10_000 {
            let s = format!("m{}", rng.gen_range(0..1000));
            distinct.insert(s.clone());
            g.get_or_insert_node(c(&s));
        }
        assert_eq!(g.node_count(), distinct.len());
    }

    #[test]
    fn attach_and_reject_two_cycle() {
        let mut g = HyperGraph::new(c("C"), NodeInit::default());
        let (a, b, cc) = (g.get_or_insert_node(c("A")), g.get_or_insert_node(c("B")), g.root());
        assert!(!g.would_create_cycle(cc, &[a, b]));
        g.attach_arc(cc, &[a, b], meta()).unwrap();

        let mut g = HyperGraph::new(c("C"), NodeInit::default());
        let a = g.get_or_insert_node(c("A"));
        g.attach_arc(g.root(), &[a], meta()).unwrap();
        assert!(g.would_create_cycle(a, &[g.root()]));
        assert_eq!(g.attach_arc(a, &[g.root()], meta()), Err(GraphError::CycleRejected { product: a }));
        assert_eq!(g.arc_count(), 1);
    }

    #[test]
    fn attach_errors() {
        let mut g = HyperGraph::new(c("C"), NodeInit::default());
        let a = g.get_or_insert_node(c("A"));
        assert_eq!(g.attach_arc(g.root(), &[], meta()), Err(GraphError::EmptyPrecursors));
        assert_eq!(g.attach_arc(g.root(), &[NodeId(9)], meta()), Err(GraphError::UnknownNode(NodeId(9))));
        assert_eq!(g.attach_arc(g.root(), &[g.root()], meta()), Err(GraphError::CycleRejected { product: g.root() }));
        let mut m = meta();
        m.reagents.insert(NodeId(0));
        assert_eq!(g.attach_arc(g.root(), &[a], m), Err(GraphError::StrayReagent(NodeId(0))));
    }

    #[test]
    fn long_cycle_rejected() {
        let mut g = HyperGraph::new(c("A"), NodeInit::default());
        let ids: Vec<NodeId> = ["B", "C", "D"].iter().map(|s| g.get_or_insert_node(c(s))).collect();
        g.attach_arc(g.root(), &[ids[0]], meta()).unwrap();
        g.attach_arc(ids[0], &[ids[1]], meta()).unwrap();
        g.attach_arc(ids[1], &[ids[2]], meta()).unwrap();
        assert!(g.would_create_cycle(ids[2], &[g.root()]));
        assert!(!g.would_create_cycle(g.root(), &[ids[2]]));
    }

    /// Oracle: recompute reachability by DFS from every precursor.
    fn reaches(g: &HyperGraph, from: NodeId, to: NodeId) -> bool {
        let mut stack = vec![from];
        let mut seen = BTreeSet::new();
        while let Some(n) = stack.pop() {
            if n == to {
                return true;
            }
            if seen.insert(n) {
                for a in g.producers(n) {
                    stack.extend(g.arc(*a).precursors.iter().copied());
                }
            }
        }
        false
    }

    #[test]
    fn random_dag_with_back_arcs_matches_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut g = HyperGraph::new(c("x0"), NodeInit::default());
        let ids: Vec<NodeId> = (1..60).map(|i| g.get_or_insert_node(c(&format!("x{i}")))).collect();
        let all: Vec<NodeId> = std::iter::once(g.root()).chain(ids).collect();
        let mut accepted = 0;
        for step in 0..250 {
            let product = all[rng.gen_range(0..all.len())];
            let k = rng.gen_range(1..4);
            let precursors: Vec<NodeId> = (0..k)
                .map(|_| {
                    // Mostly forward (higher index) arcs; every fifth is adversarial.
                    if step % 5 == 4 || product.index() + 1 >= all.len() {
                        all[rng.gen_range(0..all.len())]
                    } else {
                        all[rng.gen_range(product.index() + 1..all.len())]
                    }
                })
                .collect();
            let expected_cycle = precursors.iter().any(|&p| reaches(&g, p, product));
            assert_eq!(g.would_create_cycle(product, &precursors), expected_cycle);
            let res = g.attach_arc(product, &precursors, meta());
            assert_eq!(res.is_err(), expected_cycle);
            accepted += usize::from(res.is_ok());
            assert!(g.is_acyclic());
        }
        assert!(accepted > 150);
    }

    /// H <- {F, G}, F <- {A, B}, G <- {C}, plus an unrelated arc and an
    /// alternative route to F.
    fn figure_graph() -> (HyperGraph, Vec<ArcId>, HashMap<&'static str, NodeId>) {
        let mut g = HyperGraph::new(c("H"), NodeInit::default());
        let mut ids = HashMap::from([("H", g.root())]);
        for s in ["A", "B", "C", "D", "E", "F", "G"] {
            ids.insert(s, g.get_or_insert_node(c(s)));
        }
        let route = vec![
            g.attach_arc(ids["H"], &[ids["F"], ids["G"]], meta()).unwrap(),
            g.attach_arc(ids["F"], &[ids["A"], ids["B"]], meta()).unwrap(),
            g.attach_arc(ids["G"], &[ids["C"]], meta()).unwrap(),
        ];
        g.attach_arc(ids["F"], &[ids["D"]], meta()).unwrap();
        g.attach_arc(ids["E"], &[ids["D"]], meta()).unwrap();
        (g, route, ids)
    }

    #[test]
    fn extract_figure_route() {
        let (g, route, ids) = figure_graph();
        let tree = g.extract_route(&[route[2], route[0], route[1]]).unwrap();
        assert_eq!(tree.arcs, route);
        assert_eq!(tree.leaves, BTreeSet::from([ids["A"], ids["B"], ids["C"]]));
        assert_eq!(tree.reactant_leaves, tree.leaves);
        assert_eq!(g.extract_route(&tree.arcs).unwrap(), tree);
    }

    #[test]
    fn extract_defects() {
        let (g, route, ids) = figure_graph();
        let empty = g.extract_route(&[]).unwrap();
        assert!(empty.arcs.is_empty());
        assert_eq!(empty.leaves, BTreeSet::from([g.root()]));
        assert_eq!(
            g.extract_route(&[route[0], route[1], ArcId(3)]),
            Err(NotATree(TreeDefect::MultiParent(ids["F"])))
        );
        assert_eq!(g.extract_route(&[route[0], ArcId(4)]), Err(NotATree(TreeDefect::Disconnected(ArcId(4)))));
        assert_eq!(g.extract_route(&[ArcId(99)]), Err(NotATree(TreeDefect::UnknownArc(ArcId(99)))));
    }

    #[test]
    fn reagent_leaves_are_not_reactant_leaves() {
        let mut g = HyperGraph::new(c("P"), NodeInit::default());
        let a = g.get_or_insert_node(c("A"));
        let s = g.get_or_insert_node(c("S"));
        let mut m = meta();
        m.reagents.insert(s);
        let arc = g.attach_arc(g.root(), &[a, s], m).unwrap();
        let tree = g.extract_route(&[arc]).unwrap();
        assert_eq!(tree.leaves, BTreeSet::from([a, s]));
        assert_eq!(tree.reactant_leaves, BTreeSet::from([a]));
    }
}
