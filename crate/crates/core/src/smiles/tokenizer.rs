use std::ops::Range;

use serde::Serialize;

use super::SmilesError;

/// Coarse classification of a SMILES token.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum TokenKind {
    /// Organic-subset, aromatic, bracket or wildcard atom.
    Atom,
    /// One of `- = # $ : / \`.
    Bond,
    /// `~`, binding fragments of one compound.
    FragmentBond,
    BranchOpen,
    BranchClose,
    /// Single ring-closure digit or `%nn`.
    Ring,
    Dot,
    /// `>` of a reaction string.
    Arrow,
    /// Loose `+`, `@` or `?` outside a bracket atom.
    Mark,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token<'a> {
    pub text: &'a str,
    pub kind: TokenKind,
    pub span: Range<usize>,
}

/// Which atom symbols the tokenizer accepts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Grammar {
    /// Molecular Transformer token classes only.
    #[default]
    Strict,
    /// Strict, plus any other single upper-case letter as a placeholder atom.
    /// Used by the synthetic chemistry in tests and fixtures.
    Placeholder,
}

/// Lossless token stream over a borrowed input.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenStream<'a> {
    source: &'a str,
    tokens: Vec<Token<'a>>,
}

impl<'a> TokenStream<'a> {
    pub fn tokens(&self) -> &[Token<'a>] {
        &self.tokens
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn source(&self) -> &'a str {
        self.source
    }

    pub fn texts(&self) -> Vec<&'a str> {
        self.tokens.iter().map(|t| t.text).collect()
    }

    /// Concatenation of all token texts; equals the source.
    pub fn join(&self) -> String {
        self.tokens.iter().map(|t| t.text).collect()
    }

    /// Atom tokens that are not bare hydrogens.
    pub fn heavy_atom_count(&self) -> usize {
        self.tokens
            .iter()
            .filter(|t| t.kind == TokenKind::Atom && !is_hydrogen(t.text))
            .count()
    }
}

fn is_hydrogen(atom: &str) -> bool {
    match atom.strip_prefix('[').and_then(|s| s.strip_suffix(']')) {
        Some(inner) => {
            let symbol = inner.trim_start_matches(|c: char| c.is_ascii_digit());
            symbol.starts_with('H') && !symbol[1..].starts_with(|c: char| c.is_ascii_lowercase())
        }
        None => atom == "H",
    }
}

/// Tokenizes with the strict grammar.
pub fn tokenize(s: &str) -> Result<TokenStream<'_>, SmilesError> {
    tokenize_with(s, Grammar::Strict)
}

pub fn tokenize_with(s: &str, grammar: Grammar) -> Result<TokenStream<'_>, SmilesError> {
    if s.is_empty() {
        return Err(SmilesError::Empty);
    }
    let bytes = s.as_bytes();
    let mut tokens = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let (len, kind) = match bytes[i] {
            b'[' => match bytes[i + 1..].iter().position(|&b| b == b']') {
                // Empty brackets are not an atom.
                Some(0) | None => return Err(SmilesError::UnparsableCharacter(i)),
                Some(end) => {
                    if bytes[i + 1..i + 1 + end].iter().any(|b| !b.is_ascii_graphic() || *b == b'[') {
                        return Err(SmilesError::UnparsableCharacter(i));
                    }
                    (end + 2, TokenKind::Atom)
                }
            },
            b'B' if bytes.get(i + 1) == Some(&b'r') => (2, TokenKind::Atom),
            b'C' if bytes.get(i + 1) == Some(&b'l') => (2, TokenKind::Atom),
            b'B' | b'C' | b'N' | b'O' | b'S' | b'P' | b'F' | b'I' => (1, TokenKind::Atom),
            b'b' | b'c' | b'n' | b'o' | b's' | b'p' | b'*' => (1, TokenKind::Atom),
            b'A'..=b'Z' if grammar == Grammar::Placeholder => (1, TokenKind::Atom),
            b'(' => (1, TokenKind::BranchOpen),
            b')' => (1, TokenKind::BranchClose),
            b'.' => (1, TokenKind::Dot),
            b'=' | b'#' | b'-' | b'\\' | b'/' | b':' | b'$' => (1, TokenKind::Bond),
            b'~' => (1, TokenKind::FragmentBond),
            b'+' | b'@' | b'?' => (1, TokenKind::Mark),
            b'>' => (1, TokenKind::Arrow),
            b'0'..=b'9' => (1, TokenKind::Ring),
            b'%' => {
                let digits = bytes.get(i + 1..i + 3);
                match digits {
                    Some(d) if d.iter().all(u8::is_ascii_digit) => (3, TokenKind::Ring),
                    _ => return Err(SmilesError::UnparsableCharacter(i)),
                }
            }
            _ => return Err(SmilesError::UnparsableCharacter(i)),
        };
        tokens.push(Token { text: &s[i..i + len], kind, span: i..i + len });
        i += len;
    }
    Ok(TokenStream { source: s, tokens })
}

/// Structural checks over one molecule: branches balanced, ring closures
/// paired, no dangling bonds, no empty fragments, no reaction arrows.
pub fn validate(stream: &TokenStream<'_>) -> Result<(), SmilesError> {
    use TokenKind::*;

    let tokens = stream.tokens();
    let mut depth = 0usize;
    let mut open_rings: Vec<&str> = Vec::new();
    // kind of the previous token inside the current fragment
    let mut prev: Option<TokenKind> = None;

    for tok in tokens {
        let pos = tok.span.start;
        let ok = match tok.kind {
            Atom => matches!(prev, None | Some(Atom | Bond | Ring | BranchOpen | BranchClose)),
            Bond => matches!(prev, Some(Atom | Ring | BranchOpen | BranchClose)),
            Ring => matches!(prev, Some(Atom | Ring | Bond)),
            BranchOpen => matches!(prev, Some(Atom | Ring | BranchClose)),
            BranchClose => {
                if depth == 0 {
                    return Err(SmilesError::Syntax { position: pos, reason: "unbalanced ')'" });
                }
                depth -= 1;
                matches!(prev, Some(Atom | Ring | BranchClose))
            }
            Dot | FragmentBond => {
                if depth != 0 {
                    return Err(SmilesError::Syntax { position: pos, reason: "fragment break inside a branch" });
                }
                matches!(prev, Some(Atom | Ring | BranchClose))
            }
            Arrow | Mark => false,
        };
        if !ok {
            return Err(SmilesError::Syntax { position: pos, reason: "unexpected token" });
        }
        match tok.kind {
            BranchOpen => depth += 1,
            Ring => match open_rings.iter().position(|r| *r == tok.text) {
                Some(idx) => {
                    open_rings.swap_remove(idx);
                }
                None => open_rings.push(tok.text),
            },
            _ => {}
        }
        prev = match tok.kind {
            Dot | FragmentBond => {
                if !open_rings.is_empty() {
                    return Err(SmilesError::Syntax { position: pos, reason: "unclosed ring bond" });
                }
                None
            }
            k => Some(k),
        };
    }

    let end = stream.source().len();
    if depth != 0 {
        return Err(SmilesError::Syntax { position: end, reason: "unclosed branch" });
    }
    if !open_rings.is_empty() {
        return Err(SmilesError::Syntax { position: end, reason: "unclosed ring bond" });
    }
    match prev {
        Some(Atom | Ring | BranchClose) => Ok(()),
        _ => Err(SmilesError::Syntax { position: end, reason: "molecule ends without an atom" }),
    }
}
