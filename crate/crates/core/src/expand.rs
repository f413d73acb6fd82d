//! One node expansion: retro suggestions are normalized, deduplicated,
//! filtered for viability and selectivity, clustered, and the cluster
//! representatives are attached to the graph as hyper-arcs.
//!
//! Expansion is split into [`ExpansionContext::propose`], which only talks to
//! the models and can run for several nodes at once, and
//! [`ExpansionContext::commit`], which mutates the graph.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gateway::{
    ForwardModel, ModelError, ModelSuite, PrecursorSet, ReactionClass, ReactionClassifier, DEFAULT_FORWARD_TOPK,
    DEFAULT_RETRO_BEAMS,
};
use crate::graph::{Acceptance, ArcId, ArcMeta, GraphError, HyperGraph, NodeId, NodeInit};
use crate::search::score::arc_score;
use crate::smiles::{join_reaction, CanonicalSmiles, Normalizer};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExpansionConfig {
    /// Retro suggestions requested per node.
    pub retro_beams: usize,
    /// Likelihood above which a candidate is accepted without the
    /// selectivity check.
    pub auto_accept: f64,
    /// Required margin of forward top-1 over top-2.
    pub selectivity_gap: f64,
    pub forward_topk: usize,
    /// Worker threads for filter and classifier calls; 0 uses the shared
    /// pool, 1 runs inline.
    pub threads: usize,
}

impl Default for ExpansionConfig {
    fn default() -> Self {
        Self {
            retro_beams: DEFAULT_RETRO_BEAMS,
            auto_accept: 0.6,
            selectivity_gap: 0.2,
            forward_topk: DEFAULT_FORWARD_TOPK,
            threads: 0,
        }
    }
}

impl ExpansionConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.retro_beams == 0 {
            return Err("retro beams must be at least 1".into());
        }
        if self.forward_topk < 2 {
            return Err("forward top-k must be at least 2".into());
        }
        let (d, t) = (self.selectivity_gap, self.auto_accept);
        if !(0.0 < d && d < t && t <= 1.0) {
            return Err(format!("need 0 < gap < theta <= 1, got gap {d}, theta {t}"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rejection {
    /// Forward top-1 is some other product.
    NotTop1,
    /// Top-1 is the target but does not beat top-2 by the gap.
    InsufficientGap,
    ModelError,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Accepted(Acceptance),
    Rejected(Rejection),
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterVerdict {
    pub candidate: PrecursorSet,
    pub outcome: Outcome,
    /// Likelihood of the target: the scored value for auto-accepts and
    /// rejections, forward top-1 for selective accepts.
    pub likelihood: f64,
    /// Forward top-1 product, when the forward model was consulted.
    pub top1: Option<CanonicalSmiles>,
    /// Forward top-2 likelihood (0 when absent), when top-1 was the target.
    pub runner_up: Option<f64>,
    pub error: Option<ModelError>,
}

impl FilterVerdict {
    pub fn acceptance(&self) -> Option<Acceptance> {
        match self.outcome {
            Outcome::Accepted(a) => Some(a),
            Outcome::Rejected(_) => None,
        }
    }
}

/// True when an arc's stored likelihoods satisfy the predicate it was
/// accepted under.
pub fn acceptance_holds(cfg: &ExpansionConfig, acceptance: Acceptance, likelihood: f64, runner_up: Option<f64>) -> bool {
    match acceptance {
        Acceptance::Auto => likelihood > cfg.auto_accept,
        Acceptance::Selective => runner_up.is_some_and(|l2| likelihood > cfg.selectivity_gap + l2),
    }
}

/// Decides whether `candidate` is a viable, selective route to `target`.
pub fn filter_candidate(
    target: &CanonicalSmiles,
    candidate: PrecursorSet,
    cfg: &ExpansionConfig,
    forward: &dyn ForwardModel,
    normalizer: &dyn Normalizer,
) -> FilterVerdict {
    let rejected = |candidate, reason, likelihood, top1, error| FilterVerdict {
        candidate,
        outcome: Outcome::Rejected(reason),
        likelihood,
        top1,
        runner_up: None,
        error,
    };
    let likelihood = match forward.score_reaction(&candidate, target) {
        Ok(l) => l,
        Err(e) => return rejected(candidate, Rejection::ModelError, 0.0, None, Some(e)),
    };
    if likelihood > cfg.auto_accept {
        return FilterVerdict {
            candidate,
            outcome: Outcome::Accepted(Acceptance::Auto),
            likelihood,
            top1: None,
            runner_up: None,
            error: None,
        };
    }
    let predictions = match forward.forward_predict(&candidate, cfg.forward_topk) {
        Ok(p) => p,
        Err(e) => return rejected(candidate, Rejection::ModelError, likelihood, None, Some(e)),
    };
    let Some(first) = predictions.first() else {
        return rejected(candidate, Rejection::NotTop1, likelihood, None, None);
    };
    // Compare normal forms so that a model emitting a different spelling of
    // the target still counts.
    let top1 = normalizer.normalize(first.product.as_str()).unwrap_or_else(|_| first.product.clone());
    if &top1 != target {
        return rejected(candidate, Rejection::NotTop1, likelihood, Some(top1), None);
    }
    let l1 = first.likelihood;
    let l2 = predictions.get(1).map_or(0.0, |p| p.likelihood);
    if l1 > cfg.selectivity_gap + l2 {
        FilterVerdict {
            candidate,
            outcome: Outcome::Accepted(Acceptance::Selective),
            likelihood: l1,
            top1: Some(top1),
            runner_up: Some(l2),
            error: None,
        }
    } else {
        FilterVerdict { runner_up: Some(l2), ..rejected(candidate, Rejection::InsufficientGap, l1, Some(top1), None) }
    }
}

/// Grouping key: superclass plus the sorted reactants (reagents and the
/// target removed). Candidates whose classification failed get a key of
/// their own.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ClusterKey {
    Shared { superclass: u8, reactants: Vec<CanonicalSmiles> },
    Singleton(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Cluster {
    pub key: ClusterKey,
    /// Accepted verdicts with their reaction class.
    pub members: Vec<(FilterVerdict, ReactionClass)>,
    /// Index into `members`.
    pub representative: usize,
}

impl Cluster {
    pub fn representative(&self) -> &(FilterVerdict, ReactionClass) {
        &self.members[self.representative]
    }
}

/// Orders by likelihood descending, then joined precursor string.
fn rank_order(a: &FilterVerdict, b: &FilterVerdict) -> std::cmp::Ordering {
    b.likelihood.total_cmp(&a.likelihood).then_with(|| a.candidate.joined().cmp(&b.candidate.joined()))
}

fn reaction_text(target: &CanonicalSmiles, candidate: &PrecursorSet) -> String {
    join_reaction(candidate.molecules(), std::slice::from_ref(target))
}

/// Partitions accepted verdicts. `classes[i]` is the classifier result for
/// `accepted[i]`; clusters come out ordered by their representative.
pub fn cluster_with_classes(
    target: &CanonicalSmiles,
    accepted: Vec<FilterVerdict>,
    classes: Vec<Result<ReactionClass, ModelError>>,
) -> Vec<Cluster> {
    assert_eq!(accepted.len(), classes.len());
    let mut groups: BTreeMap<ClusterKey, Vec<(FilterVerdict, ReactionClass)>> = BTreeMap::new();
    for (i, (verdict, class)) in accepted.into_iter().zip(classes).enumerate() {
        let (key, class) = match class {
            Ok(class) => {
                let reactants = verdict.candidate.reactants().filter(|m| *m != target).cloned().collect();
                (ClusterKey::Shared { superclass: class.superclass, reactants }, class)
            }
            Err(e) => {
                log::warn!("classifier failed for {}: {e}", verdict.candidate.joined());
                (ClusterKey::Singleton(i), ReactionClass::unrecognized())
            }
        };
        groups.entry(key).or_default().push((verdict, class));
    }
    let mut clusters: Vec<Cluster> = groups
        .into_iter()
        .map(|(key, members)| {
            let representative = (0..members.len())
                .min_by(|&a, &b| rank_order(&members[a].0, &members[b].0))
                .expect("groups are non-empty");
            Cluster { key, members, representative }
        })
        .collect();
    clusters.sort_by(|a, b| rank_order(&a.representative().0, &b.representative().0));
    clusters
}

/// Classifies and clusters accepted verdicts.
pub fn cluster_candidates(
    target: &CanonicalSmiles,
    accepted: Vec<FilterVerdict>,
    classifier: &dyn ReactionClassifier,
) -> Vec<Cluster> {
    let classes = accepted.iter().map(|v| classifier.classify(&reaction_text(target, &v.candidate))).collect();
    cluster_with_classes(target, accepted, classes)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TraceVerdict {
    NotCanonicalizable,
    SelfPrecursor,
    Duplicate,
    Auto,
    Selective,
    NotTop1,
    InsufficientGap,
    ModelError,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Fate {
    Attached,
    /// Merged into a cluster with a better representative.
    Clustered,
    CycleRejected,
}

/// One line of the expansion audit log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub target: String,
    /// Retro rank, 1-based.
    pub rank: usize,
    pub raw: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub precursors: Option<String>,
    pub verdict: TraceVerdict,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub likelihood: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub top1: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub runner_up: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub class: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cluster: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fate: Option<Fate>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub arc: Option<ArcId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

/// Model-side result of expanding one molecule, not yet in the graph.
#[derive(Debug, Clone)]
pub struct Proposal {
    pub target: CanonicalSmiles,
    pub clusters: Vec<Cluster>,
    pub trace: Vec<TraceRecord>,
    /// Retro failure; nothing else was attempted.
    pub error: Option<ModelError>,
    /// Trace index of each candidate that reached the filter, by joined key.
    trace_index: BTreeMap<String, usize>,
}

#[derive(Debug, Clone)]
pub struct Expansion {
    pub node: NodeId,
    /// Attached arcs in attachment order.
    pub arcs: Vec<ArcId>,
    pub cycle_rejected: usize,
    pub trace: Vec<TraceRecord>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExpandError {
    #[error("node {0} is already expanded")]
    AlreadyExpanded(NodeId),
    #[error("node {0} is not expandable")]
    NotExpandable(NodeId),
    #[error("retro model failed: {0}")]
    Model(ModelError),
}

/// Models, normalizer and settings shared by every expansion of a run.
#[derive(Clone)]
pub struct ExpansionContext {
    pub models: ModelSuite,
    pub normalizer: Arc<dyn Normalizer>,
    pub config: ExpansionConfig,
    pool: Option<Arc<rayon::ThreadPool>>,
}

impl ExpansionContext {
    pub fn new(models: ModelSuite, normalizer: Arc<dyn Normalizer>, config: ExpansionConfig) -> Self {
        let pool = (config.threads > 1).then(|| {
            Arc::new(
                rayon::ThreadPoolBuilder::new()
                    .num_threads(config.threads)
                    .build()
                    .expect("thread pool builds"),
            )
        });
        Self { models, normalizer, config, pool }
    }

    /// Order-preserving map that runs concurrently unless configured inline.
    pub(crate) fn map<T, U, F>(&self, items: Vec<T>, f: F) -> Vec<U>
    where
        T: Send,
        U: Send,
        F: Fn(T) -> U + Send + Sync,
    {
        match (&self.pool, self.config.threads) {
            (_, 1) => items.into_iter().map(f).collect(),
            (Some(pool), _) => pool.install(|| items.into_par_iter().map(f).collect()),
            (None, _) => items.into_par_iter().map(f).collect(),
        }
    }

    /// Runs every model call of one expansion.
    pub fn propose(&self, target: &CanonicalSmiles) -> Proposal {
        let mut proposal = Proposal {
            target: target.clone(),
            clusters: Vec::new(),
            trace: Vec::new(),
            error: None,
            trace_index: BTreeMap::new(),
        };
        let predictions = match self.models.retro.retro_predict(target, self.config.retro_beams) {
            Ok(p) => p,
            Err(e) => {
                proposal.error = Some(e);
                return proposal;
            }
        };

        let record = |rank: usize, raw: String, verdict| TraceRecord {
            target: target.as_str().to_owned(),
            rank,
            raw,
            precursors: None,
            verdict,
            likelihood: None,
            top1: None,
            runner_up: None,
            class: None,
            cluster: None,
            fate: None,
            arc: None,
            detail: None,
        };

        let mut seen = HashSet::new();
        let mut candidates = Vec::new();
        for (i, p) in predictions.iter().take(self.config.retro_beams).enumerate() {
            let rank = i + 1;
            let mut reactants = Vec::new();
            let mut reagents = Vec::new();
            let mut failure = None;
            for (idx, raw) in p.precursors.iter().enumerate() {
                match self.normalizer.normalize(raw) {
                    Ok(m) => {
                        let units = m.as_str().split('.').map(CanonicalSmiles::from_normalized);
                        if p.is_reagent(idx) {
                            reagents.extend(units);
                        } else {
                            reactants.extend(units);
                        }
                    }
                    Err(e) => {
                        failure = Some(e.to_string());
                        break;
                    }
                }
            }
            if p.precursors.is_empty() {
                failure = Some("empty precursor set".into());
            }
            if let Some(detail) = failure {
                proposal.trace.push(TraceRecord { detail: Some(detail), ..record(rank, p.joined(), TraceVerdict::NotCanonicalizable) });
                continue;
            }
            let set = PrecursorSet::with_roles(reactants, reagents);
            let joined = set.joined();
            if set.contains(target) {
                proposal.trace.push(TraceRecord { precursors: Some(joined), ..record(rank, p.joined(), TraceVerdict::SelfPrecursor) });
                continue;
            }
            if !seen.insert(joined.clone()) {
                proposal.trace.push(TraceRecord { precursors: Some(joined), ..record(rank, p.joined(), TraceVerdict::Duplicate) });
                continue;
            }
            candidates.push((rank, p.joined(), set));
        }

        let verdicts = self.map(candidates, |(rank, raw, set)| {
            let v = filter_candidate(target, set, &self.config, self.models.forward.as_ref(), self.normalizer.as_ref());
            (rank, raw, v)
        });

        let mut accepted = Vec::new();
        for (rank, raw, v) in verdicts {
            let verdict = match v.outcome {
                Outcome::Accepted(Acceptance::Auto) => TraceVerdict::Auto,
                Outcome::Accepted(Acceptance::Selective) => TraceVerdict::Selective,
                Outcome::Rejected(Rejection::NotTop1) => TraceVerdict::NotTop1,
                Outcome::Rejected(Rejection::InsufficientGap) => TraceVerdict::InsufficientGap,
                Outcome::Rejected(Rejection::ModelError) => TraceVerdict::ModelError,
            };
            let joined = v.candidate.joined();
            proposal.trace_index.insert(joined.clone(), proposal.trace.len());
            proposal.trace.push(TraceRecord {
                precursors: Some(joined),
                likelihood: Some(v.likelihood),
                top1: v.top1.as_ref().map(|t| t.as_str().to_owned()),
                runner_up: v.runner_up,
                detail: v.error.as_ref().map(ToString::to_string),
                ..record(rank, raw, verdict)
            });
            if v.acceptance().is_some() {
                accepted.push(v);
            }
        }

        let texts: Vec<String> = accepted.iter().map(|v| reaction_text(target, &v.candidate)).collect();
        let classes = self.map(texts, |rxn| self.models.classifier.classify(&rxn));
        proposal.clusters = cluster_with_classes(target, accepted, classes);
        for (cluster_id, cluster) in proposal.clusters.iter().enumerate() {
            for (i, (v, class)) in cluster.members.iter().enumerate() {
                let t = &mut proposal.trace[proposal.trace_index[&v.candidate.joined()]];
                t.class = Some(class.code());
                t.cluster = Some(cluster_id);
                if i != cluster.representative {
                    t.fate = Some(Fate::Clustered);
                }
            }
        }
        proposal
    }

    /// Attaches the representatives of `proposal` under `node` and marks it
    /// expanded. `init` supplies attributes for molecules new to the graph.
    pub fn commit(
        &self,
        g: &mut HyperGraph,
        node: NodeId,
        mut proposal: Proposal,
        init: &mut dyn FnMut(&CanonicalSmiles) -> NodeInit,
    ) -> Result<Expansion, ExpandError> {
        if let Some(e) = proposal.error {
            return Err(ExpandError::Model(e));
        }
        debug_assert_eq!(g.node(node).smiles, proposal.target);
        let mut expansion = Expansion { node, arcs: Vec::new(), cycle_rejected: 0, trace: Vec::new() };
        for cluster in &proposal.clusters {
            let (verdict, class) = cluster.representative();
            let set = &verdict.candidate;
            let ids: Vec<NodeId> = set.molecules().iter().map(|m| g.get_or_insert_node_with(m.clone(), |m| init(m))).collect();
            let reagents: BTreeSet<NodeId> = set
                .molecules()
                .iter()
                .zip(&ids)
                .filter(|(m, _)| set.is_reagent(m))
                .map(|(_, &id)| id)
                .collect();
            let s_reactants: Vec<f64> =
                ids.iter().filter(|id| !reagents.contains(id)).map(|&id| g.node(id).simplicity).collect();
            let score = arc_score(verdict.likelihood, &s_reactants, g.node(node).simplicity).unwrap_or_else(|e| {
                log::warn!("arc score for {} failed: {e}", set.joined());
                0.0
            });
            let meta = ArcMeta {
                forward_likelihood: verdict.likelihood,
                runner_up: verdict.runner_up.filter(|_| verdict.acceptance() == Some(Acceptance::Selective)),
                acceptance: verdict.acceptance().expect("clusters hold accepted verdicts"),
                reaction_class: class.clone(),
                arc_score: score,
                reagents,
            };
            let t = &mut proposal.trace[proposal.trace_index[&set.joined()]];
            match g.attach_arc(node, &ids, meta) {
                Ok(arc) => {
                    t.fate = Some(Fate::Attached);
                    t.arc = Some(arc);
                    expansion.arcs.push(arc);
                }
                Err(GraphError::CycleRejected { .. }) => {
                    t.fate = Some(Fate::CycleRejected);
                    expansion.cycle_rejected += 1;
                }
                Err(e) => unreachable!("attach of a filtered candidate failed: {e}"),
            }
        }
        g.mark_expanded(node);
        expansion.trace = proposal.trace;
        Ok(expansion)
    }

    /// [`Self::propose`] followed by [`Self::commit`].
    pub fn expand_node(
        &self,
        g: &mut HyperGraph,
        node: NodeId,
        init: &mut dyn FnMut(&CanonicalSmiles) -> NodeInit,
    ) -> Result<Expansion, ExpandError> {
        let n = g.node(node);
        if n.expanded {
            return Err(ExpandError::AlreadyExpanded(node));
        }
        if !n.expandable {
            return Err(ExpandError::NotExpandable(node));
        }
        let proposal = self.propose(&n.smiles.clone());
        self.commit(g, node, proposal, init)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::{ForwardPrediction, TemplateSpec, ToyChemistry};
    use crate::smiles::ToyNormalizer;

    fn c(s: &str) -> CanonicalSmiles {
        CanonicalSmiles::from_normalized(s)
    }

    /// Forward model returning fixed numbers regardless of input.
    struct Fixed {
        score: f64,
        top: Vec<(&'static str, f64)>,
    }

    impl ForwardModel for Fixed {
        fn forward_predict(&self, _: &PrecursorSet, topk: usize) -> Result<Vec<ForwardPrediction>, ModelError> {
            Ok(self
                .top
                .iter()
                .take(topk)
                .enumerate()
                .map(|(i, (p, l))| ForwardPrediction { product: c(p), likelihood: *l, rank: i + 1 })
                .collect())
        }

        fn score_reaction(&self, _: &PrecursorSet, _: &CanonicalSmiles) -> Result<f64, ModelError> {
            Ok(self.score)
        }
    }

    fn verdict(score: f64, top: Vec<(&'static str, f64)>) -> FilterVerdict {
        let cfg = ExpansionConfig::default();
        filter_candidate(&c("N"), PrecursorSet::new([c("A")]), &cfg, &Fixed { score, top }, &ToyNormalizer::placeholder())
    }

    #[test]
    fn filter_boundary_table() {
        assert_eq!(verdict(0.7, vec![]).outcome, Outcome::Accepted(Acceptance::Auto));
        let v = verdict(0.55, vec![("N", 0.55), ("X", 0.30)]);
        assert_eq!(v.outcome, Outcome::Accepted(Acceptance::Selective));
        assert_eq!((v.likelihood, v.runner_up), (0.55, Some(0.30)));
        assert_eq!(verdict(0.45, vec![("N", 0.45), ("X", 0.30)]).outcome, Outcome::Rejected(Rejection::InsufficientGap));
        assert_eq!(verdict(0.5, vec![("X", 0.5), ("N", 0.1)]).outcome, Outcome::Rejected(Rejection::NotTop1));
        assert_eq!(verdict(0.0, vec![]).outcome, Outcome::Rejected(Rejection::NotTop1));
        // Exactly the threshold is not above it.
        assert_ne!(verdict(0.6, vec![("N", 0.6), ("X", 0.4)]).outcome, Outcome::Accepted(Acceptance::Auto));
        // Lone top-1 compares against an implicit zero.
        assert_eq!(verdict(0.3, vec![("N", 0.3)]).outcome, Outcome::Accepted(Acceptance::Selective));
    }

    #[test]
    fn gap_equality_rejects() {
        assert_eq!(verdict(0.45, vec![("N", 0.45), ("X", 0.25)]).outcome, Outcome::Rejected(Rejection::InsufficientGap));
        let cfg = ExpansionConfig::default();
        for l2 in [0.0, 0.1, 0.125, 0.3, 0.375] {
            let l1 = cfg.selectivity_gap + l2;
            let v = filter_candidate(
                &c("N"),
                PrecursorSet::new([c("A")]),
                &cfg,
                &Fixed { score: 0.0, top: vec![("N", l1), ("X", l2)] },
                &ToyNormalizer::placeholder(),
            );
            assert_eq!(v.outcome, Outcome::Rejected(Rejection::InsufficientGap), "l2 = {l2}");
        }
    }

    #[test]
    fn config_validation() {
        assert!(ExpansionConfig::default().validate().is_ok());
        assert!(ExpansionConfig { selectivity_gap: 0.7, ..Default::default() }.validate().is_err());
        assert!(ExpansionConfig { retro_beams: 0, ..Default::default() }.validate().is_err());
        assert!(ExpansionConfig { forward_topk: 1, ..Default::default() }.validate().is_err());
        assert!(ExpansionConfig { auto_accept: 1.2, ..Default::default() }.validate().is_err());
    }

    fn accepted(mols: &[&str], reagents: &[&str], likelihood: f64) -> FilterVerdict {
        FilterVerdict {
            candidate: PrecursorSet::with_roles(mols.iter().map(|m| c(m)), reagents.iter().map(|m| c(m))),
            outcome: Outcome::Accepted(Acceptance::Auto),
            likelihood,
            top1: None,
            runner_up: None,
            error: None,
        }
    }

    #[test]
    fn solvent_variants_share_a_cluster() {
        let class: ReactionClass = "2.1.1".parse().unwrap();
        let clusters = cluster_with_classes(
            &c("P"),
            vec![accepted(&["A", "B"], &["S"], 0.7), accepted(&["A", "B"], &["T"], 0.9)],
            vec![Ok(class.clone()), Ok(class)],
        );
        assert_eq!(clusters.len(), 1);
        assert_eq!(clusters[0].representative().0.likelihood, 0.9);
    }

    #[test]
    fn superclass_splits_clusters() {
        let clusters = cluster_with_classes(
            &c("P"),
            vec![accepted(&["A", "B"], &[], 0.7), accepted(&["A", "B"], &["S"], 0.7)],
            vec![Ok("1.1.1".parse().unwrap()), Ok("2.1.1".parse().unwrap())],
        );
        assert_eq!(clusters.len(), 2);
        assert!(cluster_with_classes(&c("P"), vec![], vec![]).is_empty());
    }

    #[test]
    fn ties_pick_smallest_joined_and_failures_are_singletons() {
        let class: ReactionClass = "1.1.1".parse().unwrap();
        let clusters = cluster_with_classes(
            &c("P"),
            vec![accepted(&["A"], &["Z"], 0.8), accepted(&["A"], &["Y"], 0.8), accepted(&["A"], &[], 0.9)],
            vec![Ok(class.clone()), Ok(class), Err(ModelError::Timeout)],
        );
        assert_eq!(clusters.len(), 2);
        assert_eq!(clusters[0].key, ClusterKey::Singleton(2));
        assert!(clusters[0].representative().1.is_unrecognized());
        assert_eq!(clusters[1].representative().0.candidate.joined(), "A.Y");
    }

    fn spec(lhs: &[&str], reagents: &[&str], rhs: &str, weight: f64, class: &str) -> TemplateSpec {
        TemplateSpec {
            lhs: lhs.iter().map(|s| s.to_string()).collect(),
            reagents: reagents.iter().map(|s| s.to_string()).collect(),
            rhs: rhs.into(),
            weight,
            class: class.into(),
        }
    }

    fn context(specs: &[TemplateSpec], threads: usize) -> ExpansionContext {
        let toy = Arc::new(ToyChemistry::from_specs(specs).unwrap());
        ExpansionContext::new(
            ModelSuite::from_toy(toy),
            Arc::new(ToyNormalizer::placeholder()),
            ExpansionConfig { threads, ..Default::default() },
        )
    }

    fn expand(ctx: &ExpansionContext, target: &str) -> (HyperGraph, Expansion) {
        let mut g = HyperGraph::new(c(target), NodeInit::default());
        let root = g.root();
        let e = ctx.expand_node(&mut g, root, &mut |_| NodeInit::default()).unwrap();
        (g, e)
    }

    #[test]
    fn single_template_gives_one_auto_arc() {
        let ctx = context(&[spec(&["A", "B"], &[], "C", 1.0, "1.2.3")], 1);
        let (g, e) = expand(&ctx, "C");
        assert_eq!(e.arcs.len(), 1);
        let arc = g.arc(e.arcs[0]);
        assert_eq!(arc.meta.acceptance, Acceptance::Auto);
        assert_eq!(arc.meta.forward_likelihood, 1.0);
        assert_eq!(arc.meta.reaction_class.code(), "1.2.3");
        assert!(g.node(g.root()).expanded);
        assert!(matches!(ctx.expand_node(&mut g.clone(), g.root(), &mut |_| NodeInit::default()), Err(ExpandError::AlreadyExpanded(_))));
    }

    #[test]
    fn self_precursor_is_discarded() {
        let ctx = context(&[spec(&["C", "A"], &[], "C", 1.0, "1.1.1"), spec(&["C"], &[], "C", 1.0, "1.1.1")], 1);
        let (_, e) = expand(&ctx, "C");
        assert!(e.arcs.is_empty());
        assert_eq!(e.trace.len(), 2);
        assert!(e.trace.iter().all(|t| t.verdict == TraceVerdict::SelfPrecursor));
    }

    #[test]
    fn solvent_variants_attach_once() {
        let specs = [
            spec(&["A", "B"], &["S"], "P", 3.0, "2.1.1"),
            spec(&["A", "B"], &["T"], "P", 1.0, "2.1.1"),
            spec(&["D"], &[], "P", 1.0, "5.1.1"),
        ];
        let ctx = context(&specs, 1);
        let (g, e) = expand(&ctx, "P");
        assert_eq!(e.arcs.len(), 2);
        let clustered: Vec<_> = e.trace.iter().filter(|t| t.fate == Some(Fate::Clustered)).collect();
        assert_eq!(clustered.len(), 1);
        let arc = g.arcs().iter().find(|a| a.precursors.len() == 3).unwrap();
        assert_eq!(arc.meta.reagents.len(), 1);
        assert_eq!(arc.reactants().count(), 2);
    }

    #[test]
    fn concurrency_does_not_change_output() {
        let specs: Vec<TemplateSpec> = (0..12)
            .map(|i| spec(&[&"C".repeat(i + 1), "B"], &[], "P", 1.0 + i as f64, &format!("{}.1.1", i % 11 + 1)))
            .chain((0..6).map(|i| spec(&[&"C".repeat(i + 1), "B"], &[], "Q", 0.5, "1.1.1")))
            .collect();
        let run = |threads| {
            let (g, e) = expand(&context(&specs, threads), "P");
            (g.to_json(), serde_json::to_string(&e.trace).unwrap())
        };
        let base = run(1);
        assert_eq!(run(4), base);
        assert_eq!(run(0), base);
    }
}
