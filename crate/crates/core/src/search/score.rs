//! Step scores: simplicity from synthetic complexity, and the arc score
//! `P * prod(s(precursor)) / s(product)`.

use thiserror::Error;

use crate::gateway::{ComplexityModel, ModelError};
use crate::smiles::{tokenize_with, CanonicalSmiles, Grammar};

/// Lower bound applied to every simplicity before it enters an arc score.
pub const SIMPLICITY_FLOOR: f64 = 0.01;

pub const SC_MIN: f64 = 1.0;
pub const SC_MAX: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum ScoreError {
    #[error("product simplicity {0} is not a usable divisor")]
    DegenerateProduct(f64),
    #[error("arc score inputs must be finite and non-negative")]
    BadInput,
}

/// `s = 1 - (SC - 1) / 4`; SC outside `[1, 5]` is clamped.
pub fn simplicity_from_sc(sc: f64) -> f64 {
    let clamped = sc.clamp(SC_MIN, SC_MAX);
    if clamped != sc {
        log::warn!("complexity score {sc} outside [1, 5], clamped to {clamped}");
    }
    1.0 - (clamped - 1.0) / 4.0
}

/// Simplicity from a complexity model. `None` when the model fails; the
/// caller then uses the floor and stops expanding the molecule.
pub fn simplicity(m: &CanonicalSmiles, scorer: &dyn ComplexityModel) -> Option<f64> {
    match scorer.complexity(m) {
        Ok(sc) if sc.is_finite() => Some(simplicity_from_sc(sc)),
        Ok(sc) => {
            log::warn!("complexity of {m} is {sc}; treating as unavailable");
            None
        }
        Err(e) => {
            log::warn!("complexity of {m} unavailable: {e}");
            None
        }
    }
}

/// Arc score for `k >= 1` precursors. Reagents are expected to be left out
/// of `s_precursors` by the caller.
pub fn arc_score(likelihood: f64, s_precursors: &[f64], s_product: f64) -> Result<f64, ScoreError> {
    if !likelihood.is_finite() || likelihood < 0.0 || s_precursors.iter().any(|s| !s.is_finite() || *s < 0.0) {
        return Err(ScoreError::BadInput);
    }
    if !s_product.is_finite() {
        return Err(ScoreError::DegenerateProduct(s_product));
    }
    let denominator = s_product.max(SIMPLICITY_FLOOR);
    let numerator: f64 = s_precursors.iter().map(|s| s.max(SIMPLICITY_FLOOR)).product();
    Ok(likelihood * numerator / denominator)
}

/// Token-count stand-in for a learned complexity model:
/// `SC = clamp(1 + 4 * heavy_atoms / t_max, 1, 5)`.
#[derive(Debug, Clone, Copy)]
pub struct SurrogateComplexity {
    pub t_max: f64,
}

impl Default for SurrogateComplexity {
    fn default() -> Self {
        Self { t_max: 40.0 }
    }
}

impl ComplexityModel for SurrogateComplexity {
    fn complexity(&self, molecule: &CanonicalSmiles) -> Result<f64, ModelError> {
        let tokens = tokenize_with(molecule.as_str(), Grammar::Placeholder)
            .map_err(|e| ModelError::InvalidRequest(format!("{molecule}: {e}")))?;
        let sc = 1.0 + 4.0 * tokens.heavy_atom_count() as f64 / self.t_max;
        Ok(sc.clamp(SC_MIN, SC_MAX))
    }
}
