use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};
use std::sync::Mutex;

use thiserror::Error;

use super::tokenizer::{tokenize_with, validate, Grammar, TokenKind};
use super::CanonicalSmiles;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum NormalizeError {
    /// The candidate must be discarded.
    #[error("not canonicalizable: {0}")]
    NotCanonicalizable(String),
    #[error("normalizer backend failed: {0}")]
    Backend(String),
}

/// Which standardization the normal form applies on top of plain
/// canonicalization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Profile {
    #[default]
    Canonical,
    /// Stereo-free normal form, the stand-in for InChI round-tripping.
    Inchified,
}

/// Maps molecule text to a deterministic, idempotent normal form.
pub trait Normalizer: Send + Sync {
    fn normalize(&self, s: &str) -> Result<CanonicalSmiles, NormalizeError>;

    fn profile(&self) -> Profile {
        Profile::Canonical
    }
}

pub fn normalize(s: &str, normalizer: &dyn Normalizer) -> Result<CanonicalSmiles, NormalizeError> {
    normalizer.normalize(s)
}

/// Normal form for the synthetic chemistry: every fragment must tokenize and
/// validate, explicit single bonds are dropped, `~`-bound fragments are
/// sorted inside their unit and `.`-separated units are sorted.
#[derive(Debug, Clone, Copy, Default)]
pub struct ToyNormalizer {
    grammar: Grammar,
    profile: Profile,
}

impl ToyNormalizer {
    /// Strict grammar, canonical profile.
    pub fn new() -> Self {
        Self::default()
    }

    /// Accepts single upper-case placeholder atoms (`A`, `X`, ...).
    pub fn placeholder() -> Self {
        Self { grammar: Grammar::Placeholder, profile: Profile::Canonical }
    }

    pub fn with_profile(self, profile: Profile) -> Self {
        Self { profile, ..self }
    }

    pub fn grammar(&self) -> Grammar {
        self.grammar
    }

    fn fragment(&self, fragment: &str) -> Result<String, NormalizeError> {
        let reject = |e: super::SmilesError| NormalizeError::NotCanonicalizable(format!("{fragment:?}: {e}"));
        let stream = tokenize_with(fragment, self.grammar).map_err(reject)?;
        validate(&stream).map_err(reject)?;

        let mut out = String::with_capacity(fragment.len());
        for tok in stream.tokens() {
            match (tok.kind, tok.text) {
                (TokenKind::Bond, "-") => {}
                (TokenKind::Bond, "/" | "\\") if self.profile == Profile::Inchified => {}
                (TokenKind::Atom, atom) if self.profile == Profile::Inchified && atom.starts_with('[') => {
                    out.extend(atom.chars().filter(|&c| c != '@'));
                }
                (_, text) => out.push_str(text),
            }
        }
        Ok(out)
    }
}

impl Normalizer for ToyNormalizer {
    fn normalize(&self, s: &str) -> Result<CanonicalSmiles, NormalizeError> {
        let mut units = s
            .split('.')
            .map(|unit| {
                let mut fragments =
                    unit.split('~').map(|f| self.fragment(f)).collect::<Result<Vec<_>, _>>()?;
                fragments.sort();
                Ok(fragments.join("~"))
            })
            .collect::<Result<Vec<_>, NormalizeError>>()?;
        units.sort();
        Ok(CanonicalSmiles::from_normalized(units.join(".")))
    }

    fn profile(&self) -> Profile {
        self.profile
    }
}

/// Delegates to a long-running user command speaking a line protocol: one
/// molecule per input line, one normal form per output line. An empty output
/// line means the command rejected the molecule.
pub struct ExternalNormalizer {
    profile: Profile,
    io: Mutex<ExternalIo>,
}

struct ExternalIo {
    child: Child,
    stdin: ChildStdin,
    stdout: BufReader<ChildStdout>,
}

impl ExternalNormalizer {
    pub fn spawn(command: &[String], profile: Profile) -> std::io::Result<Self> {
        let (program, args) = command.split_first().ok_or_else(|| {
            std::io::Error::new(std::io::ErrorKind::InvalidInput, "empty normalizer command")
        })?;
        let mut child = Command::new(program)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = BufReader::new(child.stdout.take().expect("piped stdout"));
        Ok(Self { profile, io: Mutex::new(ExternalIo { child, stdin, stdout }) })
    }
}

impl Normalizer for ExternalNormalizer {
    fn normalize(&self, s: &str) -> Result<CanonicalSmiles, NormalizeError> {
        if s.is_empty() || s.contains(char::is_whitespace) {
            return Err(NormalizeError::NotCanonicalizable(format!("{s:?}")));
        }
        let mut io = self.io.lock().map_err(|_| NormalizeError::Backend("poisoned".into()))?;
        let backend = |e: std::io::Error| NormalizeError::Backend(e.to_string());
        writeln!(io.stdin, "{s}").map_err(backend)?;
        io.stdin.flush().map_err(backend)?;
        let mut line = String::new();
        if io.stdout.read_line(&mut line).map_err(backend)? == 0 {
            return Err(NormalizeError::Backend("normalizer process closed its output".into()));
        }
        let out = line.trim();
        if out.is_empty() || out.contains(char::is_whitespace) {
            Err(NormalizeError::NotCanonicalizable(format!("{s:?}")))
        } else {
            Ok(CanonicalSmiles::from_normalized(out))
        }
    }

    fn profile(&self) -> Profile {
        self.profile
    }
}

impl Drop for ExternalNormalizer {
    fn drop(&mut self) {
        if let Ok(io) = self.io.get_mut() {
            let _ = io.child.kill();
            let _ = io.child.wait();
        }
    }
}
