use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use thiserror::Error;

use super::tokenize;

/// Precursors longer than this many tokens are candidates for replacement by
/// a single molecule token.
pub const LONG_PRECURSOR_TOKENS: usize = 50;

#[derive(Debug, Error)]
pub enum DictionaryError {
    #[error("reading {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
}

/// Bidirectional molecule-token dictionary. Substitution works on whole
/// `.`-separated units, never on substrings.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TokenDictionary {
    to_smiles: BTreeMap<String, String>,
    to_token: BTreeMap<String, String>,
}

impl TokenDictionary {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, token: impl Into<String>, smiles: impl Into<String>) -> Result<(), String> {
        let (token, smiles) = (token.into(), smiles.into());
        if self.to_smiles.contains_key(&token) {
            return Err(format!("duplicate token {token:?}"));
        }
        if self.to_token.contains_key(&smiles) {
            return Err(format!("duplicate molecule {smiles:?}"));
        }
        self.to_token.insert(smiles.clone(), token.clone());
        self.to_smiles.insert(token, smiles);
        Ok(())
    }

    /// Parses `token<TAB>smiles` lines. Blank lines are skipped.
    pub fn parse(text: &str) -> Result<Self, DictionaryError> {
        let mut dict = Self::new();
        for (i, line) in text.lines().enumerate() {
            let line_no = i + 1;
            if line.trim().is_empty() {
                continue;
            }
            let parse_err = |reason: String| DictionaryError::Parse { line: line_no, reason };
            let (token, smiles) =
                line.split_once('\t').ok_or_else(|| parse_err("expected token<TAB>smiles".into()))?;
            if token.is_empty() || smiles.is_empty() || smiles.contains('\t') {
                return Err(parse_err("empty or extra field".into()));
            }
            dict.insert(token, smiles).map_err(parse_err)?;
        }
        Ok(dict)
    }

    pub fn load(path: &Path) -> Result<Self, DictionaryError> {
        let text = fs::read_to_string(path)
            .map_err(|source| DictionaryError::Io { path: path.display().to_string(), source })?;
        Self::parse(&text)
    }

    pub fn len(&self) -> usize {
        self.to_smiles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.to_smiles.is_empty()
    }

    /// Replaces molecule tokens with their SMILES.
    pub fn expand(&self, s: &str) -> String {
        self.map_units(s, &self.to_smiles)
    }

    /// Replaces dictionary molecules with their tokens.
    pub fn contract(&self, s: &str) -> String {
        self.map_units(s, &self.to_token)
    }

    fn map_units(&self, s: &str, table: &BTreeMap<String, String>) -> String {
        if table.is_empty() {
            return s.to_string();
        }
        s.split('.')
            .map(|unit| table.get(unit).map(String::as_str).unwrap_or(unit))
            .collect::<Vec<_>>()
            .join(".")
    }
}

/// True when the molecule is long enough to be replaced by a token.
pub fn is_long_precursor(smiles: &str) -> bool {
    tokenize(smiles).map(|t| t.len() > LONG_PRECURSOR_TOKENS).unwrap_or(false)
}
