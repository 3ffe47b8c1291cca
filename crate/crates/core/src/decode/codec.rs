use std::collections::HashSet;
use std::fmt;
use std::sync::LazyLock;

use regex::Regex;
use serde::Serialize;

use crate::error::{Error, Result};

static MARKER: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?:^\s*|;\s*)\((\d+)\)").unwrap());

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CodecWarning {
    NonContiguousIndices,
    DuplicateIndices,
    OutOfOrderIndices,
    EmptyItem,
    LeadingTextIgnored,
}

impl CodecWarning {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::NonContiguousIndices => "non_contiguous_indices",
            Self::DuplicateIndices => "duplicate_indices",
            Self::OutOfOrderIndices => "out_of_order_indices",
            Self::EmptyItem => "empty_item",
            Self::LeadingTextIgnored => "leading_text_ignored",
        }
    }
}

impl fmt::Display for CodecWarning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Parsed {
    /// Items in surface order, trimmed; empty items are dropped.
    pub items: Vec<String>,
    /// Marker index of each kept item.
    pub indices: Vec<u64>,
    pub warnings: Vec<CodecWarning>,
}

/// "(1) a; (2) b; ..."
pub fn format_polymorphic<S: AsRef<str>>(items: &[S]) -> Result<String> {
    if items.is_empty() {
        return Err(Error::InvalidArgument("cannot format an empty inference list".into()));
    }
    Ok(items
        .iter()
        .enumerate()
        .map(|(i, s)| format!("({}) {}", i + 1, s.as_ref()))
        .collect::<Vec<_>>()
        .join("; "))
}

/// Split a numbered, semicolon-delimited list. A marker counts only at the
/// start of the text or right after a semicolon. Irregular numbering is
/// tolerated and reported.
pub fn parse_polymorphic(text: &str) -> Result<Parsed> {
    let marks: Vec<(usize, usize, u64)> = MARKER
        .captures_iter(text)
        .map(|c| {
            let whole = c.get(0).unwrap();
            let idx = c[1].parse::<u64>().unwrap_or(u64::MAX);
            (whole.start(), whole.end(), idx)
        })
        .collect();
    if marks.is_empty() {
        return Err(Error::UnparseableSequence);
    }
    let mut warnings = Vec::new();
    if !text[..marks[0].0].trim().is_empty() {
        warnings.push(CodecWarning::LeadingTextIgnored);
    }
    let mut items = Vec::new();
    let mut indices = Vec::new();
    for (k, &(_, body_start, idx)) in marks.iter().enumerate() {
        let body_end = marks.get(k + 1).map_or(text.len(), |m| m.0);
        let mut body = text[body_start..body_end].trim();
        if k + 1 == marks.len() {
            body = body.strip_suffix(';').unwrap_or(body).trim_end();
        }
        if body.is_empty() {
            warnings.push(CodecWarning::EmptyItem);
            continue;
        }
        items.push(body.to_string());
        indices.push(idx);
    }
    let all: Vec<u64> = marks.iter().map(|m| m.2).collect();
    let distinct: HashSet<u64> = all.iter().copied().collect();
    if distinct.len() != all.len() {
        warnings.push(CodecWarning::DuplicateIndices);
    }
    if all.windows(2).any(|w| w[1] < w[0]) {
        warnings.push(CodecWarning::OutOfOrderIndices);
    }
    let mut sorted: Vec<u64> = distinct.into_iter().collect();
    sorted.sort_unstable();
    if sorted.iter().enumerate().any(|(i, &v)| v != i as u64 + 1) {
        warnings.push(CodecWarning::NonContiguousIndices);
    }
    warnings.sort();
    warnings.dedup();
    Ok(Parsed {
        items,
        indices,
        warnings,
    })
}
