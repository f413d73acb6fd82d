//! Clients for the three chemistry models (single-step retro, forward
//! prediction, reaction classification) plus the synthetic-complexity hook.
//!
//! Everything behind [`ModelSuite`] is a trait object, so the search engine
//! does not care whether predictions come from the in-process
//! [`ToyChemistry`], a subprocess speaking the line protocol in [`wire`], or
//! an HTTP endpoint.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::smiles::{CanonicalSmiles, TokenDictionary};

mod manifest;
mod toy;
mod transport;
pub mod wire;

pub use manifest::{Connected, ManifestError, ModelManifest, TransportKind};
pub use toy::{TemplateSpec, ToyChemistry, ToyError};
pub use transport::{
    HttpTransport, LocalTransport, RemoteModels, RetryPolicy, SubprocessTransport, Transport,
};

/// Default number of retro suggestions kept per expansion.
pub const DEFAULT_RETRO_BEAMS: usize = 15;
/// Default forward beam size.
pub const DEFAULT_FORWARD_TOPK: usize = 3;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ModelError {
    #[error("model unavailable: {0}")]
    Unavailable(String),
    #[error("model call timed out")]
    Timeout,
    #[error("malformed model response: {0}")]
    MalformedResponse(String),
    #[error("invalid model request: {0}")]
    InvalidRequest(String),
}

impl ModelError {
    /// Transient failures are worth retrying.
    pub fn is_transient(&self) -> bool {
        matches!(self, ModelError::Unavailable(_) | ModelError::Timeout)
    }

    /// `kind: message` form used in the wire `error` field.
    pub fn to_wire(&self) -> String {
        match self {
            ModelError::Unavailable(m) => format!("unavailable: {m}"),
            ModelError::Timeout => "timeout: model call timed out".into(),
            ModelError::MalformedResponse(m) => format!("malformed: {m}"),
            ModelError::InvalidRequest(m) => format!("invalid: {m}"),
        }
    }

    pub fn from_wire(s: &str) -> Self {
        let (kind, msg) = s.split_once(": ").unwrap_or(("", s));
        match kind {
            "unavailable" => ModelError::Unavailable(msg.into()),
            "timeout" => ModelError::Timeout,
            "invalid" => ModelError::InvalidRequest(msg.into()),
            "malformed" => ModelError::MalformedResponse(msg.into()),
            _ => ModelError::MalformedResponse(s.into()),
        }
    }
}

/// Role of one predicted precursor, when the model reports it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Reactant,
    Reagent,
}

/// Normalized, deduplicated precursor molecules with optional reagent flags
/// and provenance from the retro model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrecursorSet {
    molecules: Vec<CanonicalSmiles>,
    #[serde(default, skip_serializing_if = "BTreeSet::is_empty")]
    reagents: BTreeSet<CanonicalSmiles>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rank: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub confidence: Option<f64>,
}

impl PrecursorSet {
    pub fn new(molecules: impl IntoIterator<Item = CanonicalSmiles>) -> Self {
        let molecules: BTreeSet<_> = molecules.into_iter().collect();
        Self { molecules: molecules.into_iter().collect(), reagents: BTreeSet::new(), rank: None, confidence: None }
    }

    /// Marks reagents. A molecule that is listed both as reactant and
    /// reagent counts as a reactant.
    pub fn with_roles(
        reactants: impl IntoIterator<Item = CanonicalSmiles>,
        reagents: impl IntoIterator<Item = CanonicalSmiles>,
    ) -> Self {
        let reactants: BTreeSet<_> = reactants.into_iter().collect();
        let reagents: BTreeSet<_> = reagents.into_iter().filter(|m| !reactants.contains(m)).collect();
        let mut set = Self::new(reactants.into_iter().chain(reagents.iter().cloned()));
        set.reagents = reagents;
        set
    }

    pub fn molecules(&self) -> &[CanonicalSmiles] {
        &self.molecules
    }

    pub fn reagents(&self) -> &BTreeSet<CanonicalSmiles> {
        &self.reagents
    }

    pub fn is_reagent(&self, m: &CanonicalSmiles) -> bool {
        self.reagents.contains(m)
    }

    pub fn reactants(&self) -> impl Iterator<Item = &CanonicalSmiles> {
        self.molecules.iter().filter(|m| !self.reagents.contains(*m))
    }

    pub fn contains(&self, m: &CanonicalSmiles) -> bool {
        self.molecules.binary_search(m).is_ok()
    }

    pub fn len(&self) -> usize {
        self.molecules.len()
    }

    pub fn is_empty(&self) -> bool {
        self.molecules.is_empty()
    }

    /// Sorted molecules joined by `.`; the dedup key of a candidate.
    pub fn joined(&self) -> String {
        self.molecules.iter().map(CanonicalSmiles::as_str).collect::<Vec<_>>().join(".")
    }
}

/// Three-level reaction class `superclass.category.named_reaction`.
/// Superclass 0 is reserved for unrecognized reactions.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ReactionClass {
    pub superclass: u8,
    pub category: u32,
    pub named_reaction: u32,
    #[serde(default)]
    pub label: String,
}

pub const SUPERCLASS_COUNT: usize = 12;

impl ReactionClass {
    pub fn new(superclass: u8, category: u32, named_reaction: u32) -> Result<Self, String> {
        if usize::from(superclass) >= SUPERCLASS_COUNT {
            return Err(format!("superclass {superclass} outside 0..{SUPERCLASS_COUNT}"));
        }
        Ok(Self { superclass, category, named_reaction, label: String::new() })
    }

    pub fn unrecognized() -> Self {
        Self { superclass: 0, category: 0, named_reaction: 0, label: "unrecognized".into() }
    }

    pub fn is_unrecognized(&self) -> bool {
        self.superclass == 0
    }

    pub fn code(&self) -> String {
        format!("{}.{}.{}", self.superclass, self.category, self.named_reaction)
    }
}

impl FromStr for ReactionClass {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parts: Vec<&str> = s.split('.').collect();
        let [a, b, c] = parts.as_slice() else {
            return Err(format!("reaction class {s:?} is not of the form s.c.n"));
        };
        let num = |x: &str| x.parse::<u32>().map_err(|_| format!("bad reaction class {s:?}"));
        let superclass = u8::try_from(num(a)?).map_err(|_| format!("bad superclass in {s:?}"))?;
        Self::new(superclass, num(b)?, num(c)?)
    }
}

impl fmt::Display for ReactionClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.code())
    }
}

/// One retro suggestion. Precursor strings are raw model output; callers
/// normalize them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetroPrediction {
    pub precursors: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub roles: Option<Vec<Role>>,
    pub confidence: f64,
    pub rank: usize,
}

impl RetroPrediction {
    /// Raw precursors joined with `.`.
    pub fn joined(&self) -> String {
        self.precursors.join(".")
    }

    pub fn is_reagent(&self, idx: usize) -> bool {
        self.roles.as_ref().and_then(|r| r.get(idx)) == Some(&Role::Reagent)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForwardPrediction {
    pub product: CanonicalSmiles,
    pub likelihood: f64,
    pub rank: usize,
}

pub trait RetroModel: Send + Sync {
    fn retro_predict(&self, target: &CanonicalSmiles, beams: usize) -> Result<Vec<RetroPrediction>, ModelError>;
}

pub trait ForwardModel: Send + Sync {
    fn forward_predict(&self, precursors: &PrecursorSet, topk: usize) -> Result<Vec<ForwardPrediction>, ModelError>;

    /// Likelihood of one specific product; 0 when it is not among the
    /// model's outcomes.
    fn score_reaction(&self, precursors: &PrecursorSet, product: &CanonicalSmiles) -> Result<f64, ModelError>;
}

pub trait ReactionClassifier: Send + Sync {
    fn classify(&self, rxn: &str) -> Result<ReactionClass, ModelError>;
}

/// Synthetic-complexity model returning a score in `[1, 5]`.
pub trait ComplexityModel: Send + Sync {
    fn complexity(&self, molecule: &CanonicalSmiles) -> Result<f64, ModelError>;
}

/// The model trio used by expansion and evaluation.
#[derive(Clone)]
pub struct ModelSuite {
    pub retro: Arc<dyn RetroModel>,
    pub forward: Arc<dyn ForwardModel>,
    pub classifier: Arc<dyn ReactionClassifier>,
}

impl ModelSuite {
    pub fn from_toy(toy: Arc<ToyChemistry>) -> Self {
        Self { retro: toy.clone(), forward: toy.clone(), classifier: toy }
    }

    pub fn from_remote(remote: Arc<RemoteModels>) -> Self {
        Self { retro: remote.clone(), forward: remote.clone(), classifier: remote }
    }

    /// Expands molecule tokens in retro output back to full SMILES before
    /// anything else sees them.
    pub fn with_substitutions(self, dictionary: TokenDictionary) -> Self {
        if dictionary.is_empty() {
            return self;
        }
        Self { retro: Arc::new(SubstitutingRetro { inner: self.retro, dictionary }), ..self }
    }
}

struct SubstitutingRetro {
    inner: Arc<dyn RetroModel>,
    dictionary: TokenDictionary,
}

impl RetroModel for SubstitutingRetro {
    fn retro_predict(&self, target: &CanonicalSmiles, beams: usize) -> Result<Vec<RetroPrediction>, ModelError> {
        let mut predictions = self.inner.retro_predict(target, beams)?;
        for p in &mut predictions {
            for s in &mut p.precursors {
                *s = self.dictionary.expand(s);
            }
        }
        Ok(predictions)
    }
}
