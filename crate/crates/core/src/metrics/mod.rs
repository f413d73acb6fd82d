//! Evaluation of a single-step retro model against a forward model and a
//! reaction classifier: round-trip accuracy, coverage, class diversity,
//! Jensen-Shannon divergence of per-class likelihoods and the invalid
//! SMILES rate.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gateway::{ModelSuite, PrecursorSet, ReactionClass};
use crate::smiles::{join_reaction, CanonicalSmiles, Normalizer};

pub mod jsd;

pub use jsd::{jsd, ClassHistogram, JsdSummary, LogBase};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MetricsError {
    #[error("no suggestions to evaluate")]
    EmptyEvaluation,
    #[error("no superclass has a valid suggestion above the likelihood threshold")]
    AllEmpty,
    #[error("test set line {line}: {reason}")]
    TestSet { line: usize, reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    /// Retro suggestions per target.
    pub beams: usize,
    pub bins: usize,
    pub log_base: LogBase,
    /// Let superclass 0 take part in the divergence.
    pub include_unrecognized: bool,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self { beams: 10, bins: 50, log_base: LogBase::E, include_unrecognized: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Suggestion {
    pub rank: usize,
    pub raw: String,
    /// Normalized precursors, when every one of them normalized.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub precursors: Option<String>,
    pub syntactically_valid: bool,
    /// Forward top-1 is the target.
    pub valid: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub top1: Option<String>,
    /// Likelihood of the forward top-1 product.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub likelihood: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub class: Option<ReactionClass>,
    /// A forward-model failure; such suggestions are left out of every
    /// denominator.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub forward_error: Option<String>,
    /// A classifier failure on a valid suggestion; it still counts for
    /// round-trip and coverage but not for diversity or divergence.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub class_error: Option<String>,
}

impl Suggestion {
    fn counted(&self) -> bool {
        self.forward_error.is_none()
    }

    fn valid_class(&self) -> Option<&ReactionClass> {
        if self.valid && self.counted() {
            self.class.as_ref()
        } else {
            None
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub target: CanonicalSmiles,
    pub suggestions: Vec<Suggestion>,
    /// Retro failure; the target is left out of every denominator.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub retro_error: Option<String>,
}

impl EvalRecord {
    fn counted(&self) -> bool {
        self.retro_error.is_none()
    }

    fn counted_suggestions(&self) -> impl Iterator<Item = &Suggestion> {
        self.suggestions.iter().filter(|s| s.counted())
    }

    fn covered(&self) -> bool {
        self.counted_suggestions().any(|s| s.valid)
    }
}

/// Runs the model trio on one target.
pub fn evaluate_target(target: &CanonicalSmiles, models: &ModelSuite, normalizer: &dyn Normalizer, beams: usize) -> EvalRecord {
    let predictions = match models.retro.retro_predict(target, beams) {
        Ok(p) => p,
        Err(e) => return EvalRecord { target: target.clone(), suggestions: Vec::new(), retro_error: Some(e.to_string()) },
    };
    let suggestions = predictions
        .iter()
        .take(beams)
        .enumerate()
        .map(|(i, p)| {
            let mut s = Suggestion {
                rank: i + 1,
                raw: p.joined(),
                precursors: None,
                syntactically_valid: false,
                valid: false,
                top1: None,
                likelihood: None,
                class: None,
                forward_error: None,
                class_error: None,
            };
            let normalized: Result<Vec<CanonicalSmiles>, _> = p.precursors.iter().map(|m| normalizer.normalize(m)).collect();
            let Ok(normalized) = normalized else { return s };
            if normalized.is_empty() {
                return s;
            }
            s.syntactically_valid = true;
            let (reactants, reagents): (Vec<_>, Vec<_>) =
                normalized.into_iter().enumerate().partition(|(idx, _)| !p.is_reagent(*idx));
            let set = PrecursorSet::with_roles(reactants.into_iter().map(|x| x.1), reagents.into_iter().map(|x| x.1));
            s.precursors = Some(set.joined());
            match models.forward.forward_predict(&set, 1) {
                Err(e) => s.forward_error = Some(e.to_string()),
                Ok(top) => {
                    if let Some(first) = top.first() {
                        let product = normalizer.normalize(first.product.as_str()).unwrap_or_else(|_| first.product.clone());
                        s.valid = &product == target;
                        s.top1 = Some(product.into_string());
                        s.likelihood = Some(first.likelihood);
                    }
                }
            }
            if s.valid {
                match models.classifier.classify(&join_reaction(set.molecules(), std::slice::from_ref(target))) {
                    Ok(c) => s.class = Some(c),
                    Err(e) => s.class_error = Some(e.to_string()),
                }
            }
            s
        })
        .collect();
    EvalRecord { target: target.clone(), suggestions, retro_error: None }
}

/// Evaluates every target (in parallel) and returns records in input order.
pub fn evaluate_records(targets: &[CanonicalSmiles], models: &ModelSuite, normalizer: &dyn Normalizer, beams: usize) -> Vec<EvalRecord> {
    targets.par_iter().map(|t| evaluate_target(t, models, normalizer, beams)).collect()
}

fn suggestion_count(records: &[EvalRecord]) -> usize {
    records.iter().filter(|r| r.counted()).map(|r| r.counted_suggestions().count()).sum()
}

/// Percentage of suggestions whose forward top-1 is the target.
/// Syntactically invalid suggestions count in the denominator.
pub fn round_trip(records: &[EvalRecord]) -> Result<f64, MetricsError> {
    let total = suggestion_count(records);
    if total == 0 {
        return Err(MetricsError::EmptyEvaluation);
    }
    let valid: usize = records.iter().filter(|r| r.counted()).map(|r| r.counted_suggestions().filter(|s| s.valid).count()).sum();
    Ok(100.0 * valid as f64 / total as f64)
}

/// Percentage of targets with at least one valid suggestion.
pub fn coverage(records: &[EvalRecord]) -> Result<f64, MetricsError> {
    let targets = records.iter().filter(|r| r.counted()).count();
    if targets == 0 {
        return Err(MetricsError::EmptyEvaluation);
    }
    let covered = records.iter().filter(|r| r.counted() && r.covered()).count();
    Ok(100.0 * covered as f64 / targets as f64)
}

/// Mean number of distinct superclasses among the valid suggestions of
/// covered targets. The flag is false (and the value 0) when no target is
/// covered.
pub fn class_diversity(records: &[EvalRecord]) -> (f64, bool) {
    let per_target: Vec<usize> = records
        .iter()
        .filter(|r| r.counted() && r.covered())
        .map(|r| r.counted_suggestions().filter_map(Suggestion::valid_class).map(|c| c.superclass).collect::<BTreeSet<_>>().len())
        .collect();
    if per_target.is_empty() {
        return (0.0, false);
    }
    (per_target.iter().sum::<usize>() as f64 / per_target.len() as f64, true)
}

/// Percentage of suggestions that fail to normalize.
pub fn invalid_rate(records: &[EvalRecord]) -> Result<f64, MetricsError> {
    let total = suggestion_count(records);
    if total == 0 {
        return Err(MetricsError::EmptyEvaluation);
    }
    let bad: usize =
        records.iter().filter(|r| r.counted()).map(|r| r.counted_suggestions().filter(|s| !s.syntactically_valid).count()).sum();
    Ok(100.0 * bad as f64 / total as f64)
}

/// Histograms of valid suggestions' likelihoods above 0.5, per superclass.
pub fn class_histograms(records: &[EvalRecord], bins: usize) -> Vec<ClassHistogram> {
    let mut hs = ClassHistogram::all(bins);
    for r in records.iter().filter(|r| r.counted()) {
        for s in r.counted_suggestions() {
            if let (Some(class), Some(l)) = (s.valid_class(), s.likelihood) {
                hs[usize::from(class.superclass)].add(l);
            }
        }
    }
    hs
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub round_trip: f64,
    pub coverage: f64,
    pub class_diversity: f64,
    /// False when no target had a valid suggestion.
    pub class_diversity_defined: bool,
    /// Absent when no superclass had samples.
    pub jsd: Option<JsdSummary>,
    pub invalid_smiles: f64,
    pub n_targets: usize,
    pub n_suggestions: usize,
    pub excluded_targets: usize,
    pub excluded_suggestions: usize,
    pub classifier_errors: usize,
    pub bins: usize,
    pub log_base: LogBase,
    pub include_unrecognized: bool,
    pub histograms: Vec<ClassHistogram>,
}

pub fn report(records: &[EvalRecord], cfg: &EvalConfig) -> Result<MetricsReport, MetricsError> {
    let histograms = class_histograms(records, cfg.bins);
    let (class_diversity, class_diversity_defined) = class_diversity(records);
    let jsd = match jsd::jsd(&histograms, cfg.log_base, cfg.include_unrecognized) {
        Ok(s) => Some(s),
        Err(MetricsError::AllEmpty) => None,
        Err(e) => return Err(e),
    };
    Ok(MetricsReport {
        round_trip: round_trip(records)?,
        coverage: coverage(records)?,
        class_diversity,
        class_diversity_defined,
        jsd,
        invalid_smiles: invalid_rate(records)?,
        n_targets: records.iter().filter(|r| r.counted()).count(),
        n_suggestions: suggestion_count(records),
        excluded_targets: records.iter().filter(|r| !r.counted()).count(),
        excluded_suggestions: records.iter().map(|r| r.suggestions.iter().filter(|s| !s.counted()).count()).sum(),
        classifier_errors: records.iter().map(|r| r.suggestions.iter().filter(|s| s.class_error.is_some()).count()).sum(),
        bins: cfg.bins,
        log_base: cfg.log_base,
        include_unrecognized: cfg.include_unrecognized,
        histograms,
    })
}

/// Records plus their report.
pub fn evaluate(
    targets: &[CanonicalSmiles],
    models: &ModelSuite,
    normalizer: &dyn Normalizer,
    cfg: &EvalConfig,
) -> (Vec<EvalRecord>, Result<MetricsReport, MetricsError>) {
    let records = evaluate_records(targets, models, normalizer, cfg.beams);
    let report = report(&records, cfg);
    (records, report)
}

impl MetricsReport {
    /// One header and one value row in the usual column order.
    pub fn table(&self) -> String {
        let jsd = self.jsd.as_ref().map_or_else(|| "n/a".to_string(), JsdSummary::inverse_text);
        let cd = if self.class_diversity_defined { format!("{:.2}", self.class_diversity) } else { "n/a".into() };
        let mut out = String::new();
        let _ = writeln!(out, "{:>8} {:>8} {:>6} {:>8} {:>12}", "RT", "Cov.", "CD", "1/JSD", "invalid smi");
        let _ = writeln!(
            out,
            "{:>7.1}% {:>7.1}% {:>6} {:>8} {:>11.1}%",
            self.round_trip, self.coverage, cd, jsd, self.invalid_smiles
        );
        let _ = writeln!(
            out,
            "targets {}, suggestions {}, excluded targets {}, excluded suggestions {}, log base {}, classes in JSD {}",
            self.n_targets,
            self.n_suggestions,
            self.excluded_targets,
            self.excluded_suggestions,
            self.log_base.label(),
            self.jsd.as_ref().map_or(0, |j| j.classes.len()),
        );
        out
    }

    /// `superclass,bin_low,bin_high,count` rows.
    pub fn histograms_csv(&self) -> String {
        let mut out = String::from("superclass,bin_low,bin_high,count\n");
        let width = (jsd::HIGH - jsd::LOW) / self.bins as f64;
        for h in &self.histograms {
            for (i, c) in h.counts.iter().enumerate() {
                let lo = jsd::LOW + width * i as f64;
                let _ = writeln!(out, "{},{:.4},{:.4},{}", h.superclass, lo, lo + width, c);
            }
        }
        out
    }
}

/// One audit line per suggestion.
pub fn audit_jsonl(records: &[EvalRecord]) -> String {
    #[derive(Serialize)]
    struct Line<'a> {
        target: &'a str,
        #[serde(flatten)]
        suggestion: &'a Suggestion,
    }
    #[derive(Serialize)]
    struct Failed<'a> {
        target: &'a str,
        retro_error: &'a str,
    }
    let mut out = String::new();
    for r in records {
        if let Some(e) = &r.retro_error {
            out.push_str(&serde_json::to_string(&Failed { target: r.target.as_str(), retro_error: e }).expect("serializes"));
            out.push('\n');
        }
        for s in &r.suggestions {
            out.push_str(&serde_json::to_string(&Line { target: r.target.as_str(), suggestion: s }).expect("serializes"));
            out.push('\n');
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestEntry {
    pub target: String,
    /// Ground-truth precursors; carried along but unused by the metrics.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub precursors: Option<String>,
}

/// Plain text (one target per line, `#` comments) or JSON lines with a
/// `target` field.
pub fn parse_test_set(text: &str) -> Result<Vec<TestEntry>, MetricsError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if line.starts_with('{') {
            let entry: TestEntry =
                serde_json::from_str(line).map_err(|e| MetricsError::TestSet { line: i + 1, reason: e.to_string() })?;
            out.push(entry);
        } else {
            out.push(TestEntry { target: line.to_owned(), precursors: None });
        }
    }
    Ok(out)
}
