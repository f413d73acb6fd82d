//! Retrosynthesis route planning over a directed acyclic hypergraph of
//! disconnections.
//!
//! The crate is organised bottom-up:
//!
//! - [`smiles`]: tokenization, fragment-group annotations, normalization.
//! - [`gateway`]: retro / forward / classifier model interfaces, the
//!   line-delimited JSON wire protocol and a deterministic toy chemistry.
//! - [`graph`]: molecule nodes, reaction hyper-arcs and cycle rejection.
//! - [`stock`]: commercially available building blocks.
//! - [`expand`]: one node expansion (candidate filtering and clustering).
//! - [`search`]: arc scoring and the pathway beam search.
//! - [`metrics`]: round-trip, coverage, class diversity and Jensen-Shannon
//!   divergence for single-step models.

pub mod expand;
pub mod gateway;
pub mod graph;
pub mod metrics;
pub mod search;
pub mod smiles;
pub mod stock;

pub use graph::{ArcId, HyperGraph, NodeId};
pub use expand::{ExpansionConfig, ExpansionContext};
pub use gateway::{ModelSuite, PrecursorSet, ReactionClass};
pub use search::{beam_search, Pathway, PathwayStatus, SearchConfig};
pub use smiles::{CanonicalSmiles, Normalizer, RawSmiles, ToyNormalizer};
pub use stock::StockSet;
