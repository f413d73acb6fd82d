//! Deterministic toy chemistry: a finite list of weighted whole-molecule
//! templates that answers retro, forward and classification queries
//! consistently.
//!
//! A template `lhs (+ reagents) -> rhs` applies to a precursor set when the
//! normalized set of its molecules equals the query set. The forward
//! likelihood of a product is the summed weight of the applicable templates
//! producing it divided by the total weight of all applicable templates.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{
    ForwardModel, ForwardPrediction, ModelError, PrecursorSet, ReactionClass, ReactionClassifier,
    RetroModel, RetroPrediction, Role,
};
use crate::smiles::{split_reaction, CanonicalSmiles, Normalizer, ToyNormalizer};

#[derive(Debug, Error)]
pub enum ToyError {
    #[error("reading templates: {0}")]
    Io(#[from] std::io::Error),
    #[error("template file is not valid JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("template {index}: {reason}")]
    Template { index: usize, reason: String },
}

/// One entry of the JSON template file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemplateSpec {
    pub lhs: Vec<String>,
    /// Extra precursors that do not contribute atoms to the product.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub reagents: Vec<String>,
    pub rhs: String,
    pub weight: f64,
    pub class: String,
}

#[derive(Debug, Clone)]
struct Template {
    spec: TemplateSpec,
    precursors: PrecursorSet,
    product: CanonicalSmiles,
    class: ReactionClass,
}

#[derive(Debug, Clone)]
pub struct ToyChemistry {
    templates: Vec<Template>,
    normalizer: ToyNormalizer,
    by_precursors: BTreeMap<String, Vec<usize>>,
    by_product: BTreeMap<CanonicalSmiles, Vec<usize>>,
}

impl ToyChemistry {
    /// Uses the placeholder grammar so fixtures may use single-letter atoms.
    pub fn from_specs(specs: &[TemplateSpec]) -> Result<Self, ToyError> {
        Self::with_normalizer(specs, ToyNormalizer::placeholder())
    }

    pub fn with_normalizer(specs: &[TemplateSpec], normalizer: ToyNormalizer) -> Result<Self, ToyError> {
        let mut templates = Vec::with_capacity(specs.len());
        for (index, spec) in specs.iter().enumerate() {
            let bad = |reason: String| ToyError::Template { index, reason };
            if spec.lhs.is_empty() {
                return Err(bad("empty lhs".into()));
            }
            if !(spec.weight.is_finite() && spec.weight > 0.0) {
                return Err(bad(format!("weight {} must be positive", spec.weight)));
            }
            let norm = |s: &String| normalizer.normalize(s).map_err(|e| bad(e.to_string()));
            let reactants = spec.lhs.iter().map(norm).collect::<Result<Vec<_>, _>>()?;
            let reagents = spec.reagents.iter().map(norm).collect::<Result<Vec<_>, _>>()?;
            let product = norm(&spec.rhs)?;
            let class: ReactionClass = spec.class.parse().map_err(bad)?;
            templates.push(Template {
                spec: spec.clone(),
                precursors: PrecursorSet::with_roles(reactants, reagents),
                product,
                class,
            });
        }

        let mut by_precursors: BTreeMap<String, Vec<usize>> = BTreeMap::new();
        let mut by_product: BTreeMap<CanonicalSmiles, Vec<usize>> = BTreeMap::new();
        for (i, t) in templates.iter().enumerate() {
            by_precursors.entry(t.precursors.joined()).or_default().push(i);
            by_product.entry(t.product.clone()).or_default().push(i);
        }
        Ok(Self { templates, normalizer, by_precursors, by_product })
    }

    pub fn from_json(text: &str) -> Result<Self, ToyError> {
        let specs: Vec<TemplateSpec> = serde_json::from_str(text)?;
        Self::from_specs(&specs)
    }

    pub fn load(path: &Path) -> Result<Self, ToyError> {
        Self::from_json(&fs::read_to_string(path)?)
    }

    pub fn specs(&self) -> Vec<TemplateSpec> {
        self.templates.iter().map(|t| t.spec.clone()).collect()
    }

    pub fn normalizer(&self) -> &ToyNormalizer {
        &self.normalizer
    }

    pub fn len(&self) -> usize {
        self.templates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.templates.is_empty()
    }

    /// Full outcome distribution for a precursor key, most likely first,
    /// ties by product text.
    fn outcomes(&self, key: &str) -> Vec<(CanonicalSmiles, f64)> {
        let Some(indices) = self.by_precursors.get(key) else {
            return Vec::new();
        };
        let mut weights: BTreeMap<&CanonicalSmiles, f64> = BTreeMap::new();
        let mut total = 0.0;
        for &i in indices {
            let t = &self.templates[i];
            *weights.entry(&t.product).or_default() += t.spec.weight;
            total += t.spec.weight;
        }
        let mut out: Vec<(CanonicalSmiles, f64)> =
            weights.into_iter().map(|(p, w)| (p.clone(), w / total)).collect();
        out.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        out
    }

    fn likelihood(&self, key: &str, product: &CanonicalSmiles) -> f64 {
        self.outcomes(key).into_iter().find(|(p, _)| p == product).map_or(0.0, |(_, l)| l)
    }
}

impl RetroModel for ToyChemistry {
    fn retro_predict(&self, target: &CanonicalSmiles, beams: usize) -> Result<Vec<RetroPrediction>, ModelError> {
        if beams == 0 {
            return Err(ModelError::InvalidRequest("beams must be at least 1".into()));
        }
        let Some(indices) = self.by_product.get(target) else {
            return Ok(Vec::new());
        };
        let mut scored: Vec<(f64, usize)> = indices
            .iter()
            .map(|&i| (self.likelihood(&self.templates[i].precursors.joined(), target), i))
            .collect();
        scored.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        Ok(scored
            .into_iter()
            .take(beams)
            .enumerate()
            .map(|(r, (confidence, i))| {
                let spec = &self.templates[i].spec;
                let precursors = spec.lhs.iter().chain(&spec.reagents).cloned().collect();
                let roles = std::iter::repeat(Role::Reactant)
                    .take(spec.lhs.len())
                    .chain(std::iter::repeat(Role::Reagent).take(spec.reagents.len()))
                    .collect();
                RetroPrediction { precursors, roles: Some(roles), confidence, rank: r + 1 }
            })
            .collect())
    }
}

impl ForwardModel for ToyChemistry {
    fn forward_predict(&self, precursors: &PrecursorSet, topk: usize) -> Result<Vec<ForwardPrediction>, ModelError> {
        if topk == 0 {
            return Err(ModelError::InvalidRequest("topk must be at least 1".into()));
        }
        Ok(self
            .outcomes(&precursors.joined())
            .into_iter()
            .take(topk)
            .enumerate()
            .map(|(r, (product, likelihood))| ForwardPrediction { product, likelihood, rank: r + 1 })
            .collect())
    }

    fn score_reaction(&self, precursors: &PrecursorSet, product: &CanonicalSmiles) -> Result<f64, ModelError> {
        Ok(self.likelihood(&precursors.joined(), product))
    }
}

impl ReactionClassifier for ToyChemistry {
    /// Class of the heaviest template matching both sides, first listed on
    /// ties; unrecognized when nothing matches.
    fn classify(&self, rxn: &str) -> Result<ReactionClass, ModelError> {
        let (lhs, rhs) = split_reaction(rxn).map_err(|e| ModelError::MalformedResponse(e.to_string()))?;
        let norm = |s: &str| {
            self.normalizer.normalize(s).map_err(|e| ModelError::MalformedResponse(e.to_string()))
        };
        let precursors = PrecursorSet::new(lhs.iter().map(|u| norm(u.as_str())).collect::<Result<Vec<_>, _>>()?);
        let product = norm(&rhs.iter().map(|u| u.as_str()).collect::<Vec<_>>().join("."))?;

        let best = self.by_precursors.get(&precursors.joined()).and_then(|indices| {
            indices
                .iter()
                .map(|&i| &self.templates[i])
                .filter(|t| t.product == product)
                .fold(None::<&Template>, |best, t| match best {
                    Some(b) if b.spec.weight >= t.spec.weight => Some(b),
                    _ => Some(t),
                })
        });
        Ok(best.map_or_else(ReactionClass::unrecognized, |t| t.class.clone()))
    }
}
