//! Per-superclass likelihood histograms and their Jensen-Shannon divergence.

use serde::{Deserialize, Serialize};

use super::MetricsError;
use crate::gateway::SUPERCLASS_COUNT;

/// Divergences at or below this are reported as exactly zero.
pub const JSD_ZERO: f64 = 1e-12;

/// Histogram range: likelihoods in `(LOW, HIGH]` are counted.
pub const LOW: f64 = 0.5;
pub const HIGH: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LogBase {
    E,
    Two,
    Ten,
}

impl LogBase {
    pub fn ln_base(self) -> f64 {
        match self {
            LogBase::E => 1.0,
            LogBase::Two => std::f64::consts::LN_2,
            LogBase::Ten => std::f64::consts::LN_10,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            LogBase::E => "e",
            LogBase::Two => "2",
            LogBase::Ten => "10",
        }
    }
}

impl std::str::FromStr for LogBase {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "e" | "ln" => Ok(LogBase::E),
            "2" => Ok(LogBase::Two),
            "10" => Ok(LogBase::Ten),
            _ => Err(format!("log base must be e, 2 or 10, got {s:?}")),
        }
    }
}

/// Likelihood histogram of one superclass over `(0.5, 1.0]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassHistogram {
    pub superclass: u8,
    pub counts: Vec<u64>,
}

impl ClassHistogram {
    pub fn new(superclass: u8, bins: usize) -> Self {
        Self { superclass, counts: vec![0; bins] }
    }

    /// One histogram per superclass `0..12`.
    pub fn all(bins: usize) -> Vec<Self> {
        (0..SUPERCLASS_COUNT as u8).map(|i| Self::new(i, bins)).collect()
    }

    /// Bin of a likelihood, or `None` outside `(0.5, 1.0]`.
    pub fn bin(likelihood: f64, bins: usize) -> Option<usize> {
        if !(likelihood > LOW && likelihood <= HIGH) {
            return None;
        }
        let width = (HIGH - LOW) / bins as f64;
        let idx = ((likelihood - LOW) / width).ceil() as usize;
        Some(idx.clamp(1, bins) - 1)
    }

    /// Returns whether the sample fell inside the range.
    pub fn add(&mut self, likelihood: f64) -> bool {
        match Self::bin(likelihood, self.counts.len()) {
            Some(i) => {
                self.counts[i] += 1;
                true
            }
            None => false,
        }
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Normalized distribution; `None` for an empty histogram.
    pub fn distribution(&self) -> Option<Vec<f64>> {
        let n = self.total();
        (n > 0).then(|| self.counts.iter().map(|&c| c as f64 / n as f64).collect())
    }
}

/// Shannon entropy in the given base; zero-probability bins contribute 0.
pub fn entropy(p: &[f64], base: LogBase) -> f64 {
    -p.iter().filter(|&&x| x > 0.0).map(|&x| x * x.ln()).sum::<f64>() / base.ln_base()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JsdSummary {
    pub jsd: f64,
    /// `None` when the divergence is zero (reported as infinite).
    #[serde(serialize_with = "inverse_or_inf", deserialize_with = "inverse_from")]
    pub inverse: Option<f64>,
    /// Classes that had samples and took part.
    pub classes: Vec<u8>,
    pub base: LogBase,
}

fn inverse_or_inf<S: serde::Serializer>(v: &Option<f64>, s: S) -> Result<S::Ok, S::Error> {
    match v {
        Some(x) => s.serialize_f64(*x),
        None => s.serialize_str("inf"),
    }
}

fn inverse_from<'de, D: serde::Deserializer<'de>>(d: D) -> Result<Option<f64>, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Inv {
        Num(f64),
        Text(String),
    }
    match Inv::deserialize(d)? {
        Inv::Num(x) => Ok(Some(x)),
        Inv::Text(t) if t == "inf" => Ok(None),
        Inv::Text(t) => Err(serde::de::Error::custom(format!("expected number or \"inf\", got {t:?}"))),
    }
}

impl JsdSummary {
    pub fn inverse_text(&self) -> String {
        self.inverse.map_or_else(|| "inf".into(), |x| format!("{x:.2}"))
    }
}

/// Equal-weight divergence over the non-empty histograms:
/// `H(mean P_i) - mean H(P_i)`. Superclass 0 takes part only when
/// `include_unrecognized` is set.
pub fn jsd(histograms: &[ClassHistogram], base: LogBase, include_unrecognized: bool) -> Result<JsdSummary, MetricsError> {
    let used: Vec<(u8, Vec<f64>)> = histograms
        .iter()
        .filter(|h| include_unrecognized || h.superclass != 0)
        .filter_map(|h| h.distribution().map(|p| (h.superclass, p)))
        .collect();
    if used.is_empty() {
        return Err(MetricsError::AllEmpty);
    }
    let bins = used[0].1.len();
    let k = used.len() as f64;
    let mut mixture = vec![0.0; bins];
    for (_, p) in &used {
        for (m, x) in mixture.iter_mut().zip(p) {
            *m += x / k;
        }
    }
    let mean_entropy = used.iter().map(|(_, p)| entropy(p, base)).sum::<f64>() / k;
    let raw = entropy(&mixture, base) - mean_entropy;
    let value = if raw <= JSD_ZERO { 0.0 } else { raw };
    Ok(JsdSummary {
        jsd: value,
        inverse: (value > 0.0).then(|| 1.0 / value),
        classes: used.iter().map(|(c, _)| *c).collect(),
        base,
    })
}
