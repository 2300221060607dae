//! Crash-guided symbol localization (`iter_grep`).
//!
//! Candidate sites for a symbol are ranked by a lexicographic score:
//!
//! 1. sites in a file that appears in the crash stack come first;
//! 2. among those, the file's innermost frame wins (frame 0 = crash site);
//! 3. then the line distance to that frame;
//! 4. definitions before uses;
//! 5. `(file, line)` as the final tiebreak.
//!
//! When the queried symbol is a parameter of some function, call sites of
//! that function are candidates too: that is where the argument bound to the
//! parameter comes from.

mod crash;
mod index;

use std::path::Path;

use serde::{Deserialize, Serialize};

pub use crash::{parse_crash_report, CrashReport, Frame};
pub use index::{
    index_repository, CallSite, FunctionDef, IndexError, SiteKind, SymbolIndex, SymbolSite, MAX_FILE_BYTES,
};

pub const DEFAULT_K: usize = 5;
pub const DEFAULT_CONTEXT_RADIUS: usize = 10;

/// A ranked repair target.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LocalizationObject {
    pub file: String,
    pub line_start: usize,
    pub line_end: usize,
    #[serde(default = "default_rank")]
    pub rank: usize,
    #[serde(default)]
    pub reason: String,
}

fn default_rank() -> usize {
    1
}

impl LocalizationObject {
    pub fn is_valid(&self) -> bool {
        !self.file.is_empty() && self.line_start >= 1 && self.line_start <= self.line_end && self.rank >= 1
    }
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum LocalizeError {
    #[error("symbol must be non-empty")]
    EmptySymbol,
    #[error("no sites match symbol `{0}`")]
    NoMatch(String),
}

/// A site under consideration, possibly reached through a caller edge.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Candidate {
    pub file: String,
    pub line: usize,
    pub kind: SiteKind,
    /// Set when the site is a call to a function taking the symbol as a
    /// parameter.
    pub via_call: Option<String>,
}

/// The ranking key; smaller is better.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct Score {
    pub outside_stack: bool,
    pub frame: usize,
    pub distance: usize,
    pub kind: SiteKind,
    pub file: String,
    pub line: usize,
}

/// Whether a repository-relative path and a (possibly absolute) frame path
/// name the same file: the shorter component list must be a suffix of the
/// longer one.
pub fn same_file(rel: &str, frame_path: &str) -> bool {
    let a: Vec<&str> = rel.split('/').filter(|c| !c.is_empty() && *c != ".").collect();
    let b: Vec<&str> = frame_path.split('/').filter(|c| !c.is_empty() && *c != ".").collect();
    let n = a.len().min(b.len());
    n > 0 && a[a.len() - n..] == b[b.len() - n..]
}

/// Innermost frame located in `file`, with its index.
fn nearest_frame<'r>(report: &'r CrashReport, file: &str) -> Option<(usize, &'r Frame)> {
    report.frames.iter().enumerate().find(|(_, f)| same_file(file, &f.file))
}

pub fn score(candidate: &Candidate, report: Option<&CrashReport>) -> Score {
    let (outside_stack, frame, distance) = match report.and_then(|r| nearest_frame(r, &candidate.file)) {
        Some((i, f)) => (false, i, candidate.line.abs_diff(f.line)),
        None => (true, usize::MAX, usize::MAX),
    };
    Score {
        outside_stack,
        frame,
        distance,
        kind: candidate.kind,
        file: candidate.file.clone(),
        line: candidate.line,
    }
}

/// Direct sites of `symbol` plus caller sites of functions declaring it as
/// a parameter; one candidate per `(file, line)`, direct sites first.
pub fn candidates(index: &SymbolIndex, symbol: &str) -> Vec<Candidate> {
    let mut out: Vec<Candidate> = index
        .sites(symbol)
        .iter()
        .map(|s| Candidate {
            file: s.file.clone(),
            line: s.line,
            kind: s.kind,
            via_call: None,
        })
        .collect();
    for func in index.functions_with_param(symbol) {
        for call in index.calls_to(&func.name) {
            if !out.iter().any(|c| c.file == call.file && c.line == call.line) {
                out.push(Candidate {
                    file: call.file.clone(),
                    line: call.line,
                    kind: SiteKind::Use,
                    via_call: Some(func.name.clone()),
                });
            }
        }
    }
    out
}

fn reason(symbol: &str, c: &Candidate, s: &Score, report: Option<&CrashReport>) -> String {
    let what = match (&c.via_call, c.kind) {
        (Some(f), _) => format!("caller of {f}, binds parameter `{symbol}`"),
        (None, SiteKind::Definition) => format!("definition of `{symbol}`"),
        (None, SiteKind::Use) => format!("use of `{symbol}`"),
    };
    match report {
        Some(r) if !s.outside_stack => {
            let f = &r.frames[s.frame];
            if s.distance == 0 && s.frame == 0 {
                format!("crash site ({}) in {}: {what}", r.fault_kind, f.function)
            } else if s.distance == 0 {
                format!("stack frame #{} in {}: {what}", s.frame, f.function)
            } else {
                format!("{what}, {} lines from frame #{} ({}:{})", s.distance, s.frame, f.function, f.line)
            }
        }
        Some(_) => format!("{what}, outside the crash stack"),
        None => what,
    }
}

/// Returns at most `k` ranked locations for `symbol`, each widened to
/// `radius` lines of context clamped to the file.
pub fn iter_grep(
    index: &SymbolIndex,
    symbol: &str,
    report: Option<&CrashReport>,
    k: usize,
    radius: usize,
) -> Result<Vec<LocalizationObject>, LocalizeError> {
    let symbol = symbol.trim();
    if symbol.is_empty() {
        return Err(LocalizeError::EmptySymbol);
    }
    let mut scored: Vec<(Score, Candidate)> = candidates(index, symbol)
        .into_iter()
        .map(|c| (score(&c, report), c))
        .collect();
    if scored.is_empty() {
        return Err(LocalizeError::NoMatch(symbol.to_string()));
    }
    scored.sort_by(|a, b| a.0.cmp(&b.0));
    Ok(scored
        .into_iter()
        .take(k)
        .enumerate()
        .map(|(i, (s, c))| {
            let max = index.line_count(&c.file).unwrap_or(c.line).max(c.line).max(1);
            LocalizationObject {
                line_start: c.line.saturating_sub(radius).max(1),
                line_end: (c.line + radius).min(max),
                reason: reason(symbol, &c, &s, report),
                rank: i + 1,
                file: c.file,
            }
        })
        .collect())
}

/// Convenience wrapper: index `root`, parse the optional report, rank.
pub fn localize(
    root: &Path,
    symbol: &str,
    report_text: Option<&str>,
    k: usize,
) -> anyhow::Result<Vec<LocalizationObject>> {
    let index = index_repository(root)?;
    let report = report_text.and_then(parse_crash_report);
    Ok(iter_grep(&index, symbol, report.as_ref(), k, DEFAULT_CONTEXT_RADIUS)?)
}
