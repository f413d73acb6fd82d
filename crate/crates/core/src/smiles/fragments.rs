use std::collections::BTreeSet;

use super::{RawSmiles, SmilesError};

/// Groups of 0-based fragment indices that belong to one compound, as
/// declared by a trailing `|f:1.2,4.5|` annotation.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FragmentGroups {
    groups: Vec<Vec<usize>>,
}

impl FragmentGroups {
    /// Builds groups, checking that no index is repeated.
    pub fn new(groups: Vec<Vec<usize>>) -> Result<Self, SmilesError> {
        let mut seen = BTreeSet::new();
        for group in &groups {
            if group.is_empty() {
                return Err(SmilesError::MalformedAnnotation("empty group".into()));
            }
            for &idx in group {
                if !seen.insert(idx) {
                    return Err(SmilesError::MalformedAnnotation(format!(
                        "fragment {idx} appears in more than one place"
                    )));
                }
            }
        }
        Ok(Self { groups })
    }

    pub fn groups(&self) -> &[Vec<usize>] {
        &self.groups
    }

    pub fn is_empty(&self) -> bool {
        self.groups.is_empty()
    }

    /// Fails with `IndexOutOfRange` if an index is not below `count`.
    pub fn check_bounds(&self, count: usize) -> Result<(), SmilesError> {
        match self.groups.iter().flatten().find(|&&idx| idx >= count) {
            Some(&index) => Err(SmilesError::IndexOutOfRange { index, count }),
            None => Ok(()),
        }
    }

    /// `|f:1.2,4.5|`, or the empty string when there are no groups.
    pub fn render(&self) -> String {
        if self.groups.is_empty() {
            return String::new();
        }
        let body = self
            .groups
            .iter()
            .map(|g| g.iter().map(usize::to_string).collect::<Vec<_>>().join("."))
            .collect::<Vec<_>>()
            .join(",");
        format!("|f:{body}|")
    }

    /// Body followed by the space-separated annotation.
    pub fn annotate(&self, body: &RawSmiles) -> String {
        if self.groups.is_empty() {
            body.to_string()
        } else {
            format!("{body} {}", self.render())
        }
    }
}

fn malformed(msg: impl Into<String>) -> SmilesError {
    SmilesError::MalformedAnnotation(msg.into())
}

/// Strips a trailing `|f:...|` annotation and parses its groups.
pub fn parse_fragment_groups(annotated: &str) -> Result<(RawSmiles, FragmentGroups), SmilesError> {
    let Some(bar) = annotated.find('|') else {
        return Ok((RawSmiles::new(annotated)?, FragmentGroups::default()));
    };
    let (body, annotation) = annotated.split_at(bar);
    let body = body
        .strip_suffix(' ')
        .ok_or_else(|| malformed("annotation must be separated from the body by a space"))?;
    let inner = annotation
        .strip_prefix("|f:")
        .and_then(|s| s.strip_suffix('|'))
        .ok_or_else(|| malformed(annotation))?;
    if inner.contains('|') {
        return Err(malformed(annotation));
    }

    let groups = inner
        .split(',')
        .map(|group| {
            group
                .split('.')
                .map(|idx| {
                    if idx.is_empty() || !idx.bytes().all(|b| b.is_ascii_digit()) {
                        return Err(malformed(format!("bad index {idx:?}")));
                    }
                    idx.parse::<usize>().map_err(|_| malformed(format!("bad index {idx:?}")))
                })
                .collect::<Result<Vec<_>, _>>()
        })
        .collect::<Result<Vec<_>, _>>()?;

    let body = RawSmiles::new(body)?;
    let groups = FragmentGroups::new(groups)?;
    groups.check_bounds(body.units().count())?;
    Ok((body, groups))
}

/// Rewrites a dot-separated body so that each group's fragments are adjacent
/// and joined by `~`. A group takes the position of its lowest index;
/// ungrouped fragments keep their relative order.
pub fn bind_fragments(body: &RawSmiles, groups: &FragmentGroups) -> Result<RawSmiles, SmilesError> {
    let fragments: Vec<&str> = body.units().collect();
    groups.check_bounds(fragments.len())?;

    let mut owner: Vec<Option<usize>> = vec![None; fragments.len()];
    let mut sorted: Vec<Vec<usize>> = groups.groups().to_vec();
    for (g, members) in sorted.iter_mut().enumerate() {
        members.sort_unstable();
        for &idx in members.iter() {
            owner[idx] = Some(g);
        }
    }

    let mut units = Vec::with_capacity(fragments.len());
    for (idx, fragment) in fragments.iter().enumerate() {
        match owner[idx] {
            None => units.push(fragment.to_string()),
            Some(g) if sorted[g][0] == idx => units.push(
                sorted[g].iter().map(|&i| fragments[i]).collect::<Vec<_>>().join("~"),
            ),
            Some(_) => {}
        }
    }
    RawSmiles::new(units.join("."))
}
