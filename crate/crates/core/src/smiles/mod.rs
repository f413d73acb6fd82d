//! Molecule and reaction strings: tokenization, fragment groups,
//! normalization and long-precursor token substitution.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

mod fragments;
mod normalize;
mod substitution;
mod tokenizer;

pub use fragments::{bind_fragments, parse_fragment_groups, FragmentGroups};
pub use normalize::{
    normalize, ExternalNormalizer, NormalizeError, Normalizer, Profile, ToyNormalizer,
};
pub use substitution::{is_long_precursor, DictionaryError, TokenDictionary, LONG_PRECURSOR_TOKENS};
pub use tokenizer::{tokenize, tokenize_with, validate, Grammar, Token, TokenKind, TokenStream};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SmilesError {
    #[error("empty SMILES")]
    Empty,
    #[error("whitespace at byte {0}")]
    Whitespace(usize),
    #[error("unparsable character at byte {0}")]
    UnparsableCharacter(usize),
    #[error("syntax error at byte {position}: {reason}")]
    Syntax { position: usize, reason: &'static str },
    #[error("malformed fragment annotation: {0}")]
    MalformedAnnotation(String),
    #[error("fragment index {index} out of range for {count} fragments")]
    IndexOutOfRange { index: usize, count: usize },
    #[error("malformed reaction: {0}")]
    MalformedReaction(String),
}

/// Untrusted molecule text: non-empty, no whitespace.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct RawSmiles(String);

impl RawSmiles {
    pub fn new(text: impl Into<String>) -> Result<Self, SmilesError> {
        let text = text.into();
        if text.is_empty() {
            return Err(SmilesError::Empty);
        }
        if let Some(pos) = text.find(char::is_whitespace) {
            return Err(SmilesError::Whitespace(pos));
        }
        Ok(Self(text))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    /// Top-level `.`-separated units; `~`-bound fragments stay together.
    pub fn units(&self) -> impl Iterator<Item = &str> {
        self.0.split('.')
    }
}

impl AsRef<str> for RawSmiles {
    fn as_ref(&self) -> &str {
        &self.0
    }
}

impl TryFrom<String> for RawSmiles {
    type Error = SmilesError;

    fn try_from(value: String) -> Result<Self, Self::Error> {
        Self::new(value)
    }
}

impl From<RawSmiles> for String {
    fn from(value: RawSmiles) -> Self {
        value.0
    }
}

impl fmt::Display for RawSmiles {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Molecule text in the normal form of the active [`Normalizer`]. Within a
/// run, equal text means the same molecule.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CanonicalSmiles(String);

impl CanonicalSmiles {
    /// Wraps text that is already in normal form. Normalizers, snapshot
    /// readers and the model gateway use this; everything else should go
    /// through [`normalize`].
    pub fn from_normalized(text: impl Into<String>) -> Self {
        Self(text.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn into_string(self) -> String {
        self.0
    }
}

impl fmt::Display for CanonicalSmiles {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl AsRef<str> for CanonicalSmiles {
    fn as_ref(&self) -> &str {
        &self.0
    }
}

/// Splits `precursors>>products` into its two sides. Each side is split on
/// `.`, so `~`-bound fragments come out as one unit.
pub fn split_reaction(rxn: &str) -> Result<(Vec<RawSmiles>, Vec<RawSmiles>), SmilesError> {
    let arrows = rxn.matches(">>").count();
    if arrows != 1 || rxn.matches('>').count() != 2 {
        return Err(SmilesError::MalformedReaction(format!(
            "expected exactly one '>>' in {rxn:?}"
        )));
    }
    let (lhs, rhs) = rxn.split_once(">>").expect("arrow counted above");
    let side = |s: &str| -> Result<Vec<RawSmiles>, SmilesError> {
        if s.is_empty() {
            return Err(SmilesError::MalformedReaction(format!("empty side in {rxn:?}")));
        }
        s.split('.')
            .map(|unit| {
                RawSmiles::new(unit)
                    .map_err(|e| SmilesError::MalformedReaction(format!("{unit:?}: {e}")))
            })
            .collect()
    };
    Ok((side(lhs)?, side(rhs)?))
}

/// Joins precursor and product units into a reaction string.
pub fn join_reaction<S: AsRef<str>>(precursors: &[S], products: &[S]) -> String {
    let join = |xs: &[S]| xs.iter().map(AsRef::as_ref).collect::<Vec<_>>().join(".");
    format!("{}>>{}", join(precursors), join(products))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn texts(v: &[RawSmiles]) -> Vec<&str> {
        v.iter().map(RawSmiles::as_str).collect()
    }

    #[test]
    fn raw_smiles_invariants() {
        assert!(RawSmiles::new("CCO").is_ok());
        assert_eq!(RawSmiles::new("").unwrap_err(), SmilesError::Empty);
        assert_eq!(RawSmiles::new("C O").unwrap_err(), SmilesError::Whitespace(1));
        let parsed: Result<RawSmiles, _> = serde_json::from_str("\"C\\tC\"");
        assert!(parsed.is_err());
    }

    #[test]
    fn split_two_precursors() {
        let (p, q) = split_reaction("CC.O>>CCO").unwrap();
        assert_eq!(texts(&p), ["CC", "O"]);
        assert_eq!(texts(&q), ["CCO"]);
    }

    #[test]
    fn split_keeps_bound_fragments() {
        // Oracle: scan characters, cutting at '.' only; '~' never cuts.
        let rxn = "A~B.C>>D";
        let mut units = vec![String::new()];
        for ch in rxn.split(">>").next().unwrap().chars() {
            if ch == '.' {
                units.push(String::new());
            } else {
                units.last_mut().unwrap().push(ch);
            }
        }
        let (p, q) = split_reaction(rxn).unwrap();
        assert_eq!(texts(&p), units.iter().map(String::as_str).collect::<Vec<_>>());
        assert_eq!(texts(&p), ["A~B", "C"]);
        assert_eq!(texts(&q), ["D"]);
    }

    #[test]
    fn split_rejects_bad_arrows() {
        for bad in ["A>>B>>C", "AB", "A>B>C", "A>>", ">>B", "A.>>B", "A>>>B"] {
            assert!(
                matches!(split_reaction(bad), Err(SmilesError::MalformedReaction(_))),
                "{bad}"
            );
        }
    }

    #[test]
    fn join_inverts_split() {
        let (p, q) = split_reaction("A~B.C>>D").unwrap();
        assert_eq!(join_reaction(&p, &q), "A~B.C>>D");
    }
}
