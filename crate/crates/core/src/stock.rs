//! Commercially available building blocks.

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use thiserror::Error;

use crate::smiles::{CanonicalSmiles, Normalizer};

#[derive(Debug, Error)]
pub enum StockError {
    #[error("reading stock file {path}: {source}")]
    Io { path: String, source: std::io::Error },
}

/// How `~`-bound multi-fragment molecules are matched.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FragmentLookup {
    /// The whole bound unit must be an entry.
    #[default]
    WholeUnit,
    /// The unit is available if it is an entry or every fragment is.
    PerFragment,
}

/// What happened while loading; bad lines are reported, not fatal.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LoadReport {
    pub lines: usize,
    pub duplicates: usize,
    /// `(source, 1-based line number, text)` of lines that failed to normalize.
    pub rejected: Vec<(String, usize, String)>,
}

/// Exact-membership set of normalized molecules. Immutable once built.
#[derive(Debug, Clone, Default)]
pub struct StockSet {
    entries: HashSet<CanonicalSmiles>,
    source: String,
    lookup: FragmentLookup,
}

impl StockSet {
    pub fn empty() -> Self {
        Self::default()
    }

    /// Normalizes every line; `#` starts a comment, blank lines are skipped.
    pub fn parse(text: &str, source: &str, normalizer: &dyn Normalizer) -> (Self, LoadReport) {
        let mut stock = Self { source: source.to_owned(), ..Self::default() };
        let mut report = LoadReport::default();
        stock.add_text(text, source, normalizer, &mut report);
        (stock, report)
    }

    pub fn load(path: &Path, normalizer: &dyn Normalizer) -> Result<(Self, LoadReport), StockError> {
        Self::load_many(&[path], normalizer)
    }

    /// Union of several files.
    pub fn load_many<P: AsRef<Path>>(paths: &[P], normalizer: &dyn Normalizer) -> Result<(Self, LoadReport), StockError> {
        let mut stock = Self::default();
        let mut report = LoadReport::default();
        let mut sources = Vec::new();
        for path in paths {
            let path = path.as_ref();
            let label = path.display().to_string();
            let text = fs::read_to_string(path).map_err(|source| StockError::Io { path: label.clone(), source })?;
            stock.add_text(&text, &label, normalizer, &mut report);
            sources.push(label);
        }
        stock.source = sources.join(",");
        if !report.rejected.is_empty() {
            log::warn!("stock: {} line(s) could not be normalized and were skipped", report.rejected.len());
        }
        Ok((stock, report))
    }

    fn add_text(&mut self, text: &str, source: &str, normalizer: &dyn Normalizer, report: &mut LoadReport) {
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            report.lines += 1;
            match normalizer.normalize(line) {
                Ok(m) => {
                    if !self.entries.insert(m) {
                        report.duplicates += 1;
                    }
                }
                Err(e) => {
                    log::debug!("stock {source}:{}: {e}", i + 1);
                    report.rejected.push((source.to_owned(), i + 1, line.to_owned()));
                }
            }
        }
    }

    /// Entries are trusted to be normalized already.
    pub fn from_canonical(entries: impl IntoIterator<Item = CanonicalSmiles>, source: &str) -> Self {
        Self { entries: entries.into_iter().collect(), source: source.to_owned(), lookup: FragmentLookup::default() }
    }

    pub fn with_lookup(self, lookup: FragmentLookup) -> Self {
        Self { lookup, ..self }
    }

    /// Exact membership of an already-normalized molecule.
    pub fn contains(&self, m: &CanonicalSmiles) -> bool {
        if self.entries.contains(m) {
            return true;
        }
        match self.lookup {
            FragmentLookup::WholeUnit => false,
            FragmentLookup::PerFragment => {
                let s = m.as_str();
                s.contains('~')
                    && !s.contains('.')
                    && s.split('~').all(|f| self.entries.contains(&CanonicalSmiles::from_normalized(f)))
            }
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    /// Entries in sorted order.
    pub fn sorted(&self) -> Vec<&CanonicalSmiles> {
        let mut v: Vec<_> = self.entries.iter().collect();
        v.sort();
        v
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::smiles::ToyNormalizer;

    fn c(s: &str) -> CanonicalSmiles {
        CanonicalSmiles::from_normalized(s)
    }

    #[test]
    fn three_valid_lines() {
        let (s, r) = StockSet::parse("CCO\nO\nc1ccccc1\n", "t", &ToyNormalizer::new());
        assert_eq!(s.len(), 3);
        assert_eq!(r.lines, 3);
        assert!(r.rejected.is_empty());
    }

    #[test]
    fn duplicates_and_comments() {
        let text = "# header\nCCO\nC-C-O  # same molecule\n\nO\nO\n";
        let (s, r) = StockSet::parse(text, "t", &ToyNormalizer::new());
        assert_eq!(s.len(), 2);
        assert_eq!(r.duplicates, 2);
    }

    #[test]
    fn one_bad_line_in_hundred() {
        let mut lines: Vec<String> = (1..=99).map(|i| "C".repeat(i)).collect();
        lines.insert(42, "C1CC".into());
        let (s, r) = StockSet::parse(&lines.join("\n"), "t", &ToyNormalizer::new());
        assert_eq!(s.len(), 99);
        assert_eq!(r.rejected, vec![("t".to_string(), 43, "C1CC".to_string())]);
    }

    #[test]
    fn membership_is_exact() {
        let (s, _) = StockSet::parse("CCO\n", "t", &ToyNormalizer::new());
        assert!(s.contains(&c("CCO")));
        assert!(!s.contains(&c("CCN")));
        // An un-normalized alias is not found; callers normalize first.
        assert!(!s.contains(&c("C-C-O")));
        assert!(s.contains(&ToyNormalizer::new().normalize("C-C-O").unwrap()));
    }

    #[test]
    fn fragment_lookup_modes() {
        let s = StockSet::from_canonical([c("[Na+]"), c("[Cl-]")], "t");
        assert!(!s.contains(&c("[Cl-]~[Na+]")));
        let s = s.with_lookup(FragmentLookup::PerFragment);
        assert!(s.contains(&c("[Cl-]~[Na+]")));
        assert!(!s.contains(&c("[Br-]~[Na+]")));
    }

    #[test]
    fn load_many_unions_files() {
        let dir = tempfile::tempdir().unwrap();
        let (a, b) = (dir.path().join("a.smi"), dir.path().join("b.smi"));
        fs::write(&a, "CCO\nO\n").unwrap();
        fs::write(&b, "O\nN\n").unwrap();
        let (s, r) = StockSet::load_many(&[&a, &b], &ToyNormalizer::new()).unwrap();
        assert_eq!(s.len(), 3);
        assert_eq!(r.duplicates, 1);
        assert!(StockSet::load(&dir.path().join("missing"), &ToyNormalizer::new()).is_err());
    }
}
