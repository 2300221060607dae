//! Context compression for failed attempts.
//!
//! A failed attempt is reduced to a fixed three-field template: the file
//! ranges that were visited, the diff hunks that were applied, and a short
//! verification failure log. Each field gets a third of the character
//! budget and marks truncation in-band.

use std::fmt::Write as _;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::diff;

pub const DEFAULT_COMPRESS_BUDGET: usize = 6_000;
const MAX_FRAMES: usize = 8;
const MAX_FAILING_TESTS: usize = 8;
const FALLBACK_TAIL_LINES: usize = 20;

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompressedContext {
    /// `path:start-end` entries, in visit order.
    pub visited: Vec<String>,
    /// One entry per hunk, prefixed with its file path.
    pub applied_hunks: Vec<String>,
    pub failure_log: String,
}

impl CompressedContext {
    /// Characters counted against the budget: the content of all three
    /// fields.
    pub fn size(&self) -> usize {
        self.visited.iter().map(|s| s.chars().count()).sum::<usize>()
            + self.applied_hunks.iter().map(|s| s.chars().count()).sum::<usize>()
            + self.failure_log.chars().count()
    }

    pub fn is_empty(&self) -> bool {
        self.visited.is_empty() && self.applied_hunks.is_empty() && self.failure_log.is_empty()
    }

    /// Prompt rendering of the template.
    pub fn render(&self) -> String {
        let mut out = String::new();
        out.push_str("(i) Visited files/line ranges:\n");
        if self.visited.is_empty() {
            out.push_str("  (none)\n");
        }
        for v in &self.visited {
            let _ = writeln!(out, "  - {v}");
        }
        out.push_str("(ii) Applied diff hunks:\n");
        if self.applied_hunks.is_empty() {
            out.push_str("  (none)\n");
        }
        for h in &self.applied_hunks {
            out.push_str(h);
            if !h.ends_with('\n') {
                out.push('\n');
            }
        }
        out.push_str("(iii) Verification failure log:\n");
        if self.failure_log.is_empty() {
            out.push_str("  (none)\n");
        } else {
            out.push_str(&self.failure_log);
            if !self.failure_log.ends_with('\n') {
                out.push('\n');
            }
        }
        out
    }
}

/// What the agent observed during the attempt being compressed.
#[derive(Debug, Clone, Default)]
pub struct SessionTrace {
    pub visited: Vec<(String, usize, usize)>,
    pub applied_diff: String,
}

/// Keeps the head and tail of `text` so that the result, including the
/// truncation marker, has at most `limit` characters.
pub fn truncate_middle(text: &str, limit: usize) -> String {
    let total = text.chars().count();
    if total <= limit {
        return text.to_string();
    }
    let marker = |n: usize| format!("\n[... {n} characters truncated ...]\n");
    // Marker length depends on the number it prints; iterate to a fixpoint.
    let mut keep = limit.saturating_sub(marker(total).chars().count());
    let mut m = marker(total - keep);
    while keep + m.chars().count() > limit && keep > 0 {
        keep -= 1;
        m = marker(total - keep);
    }
    if keep + m.chars().count() > limit {
        return text.chars().take(limit).collect();
    }
    let head = keep - keep / 2;
    let tail = keep / 2;
    let mut out: String = text.chars().take(head).collect();
    out.push_str(&m);
    out.extend(text.chars().skip(total - tail));
    out
}

fn fit_list(items: Vec<String>, limit: usize, what: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut used = 0;
    let n = items.len();
    for (i, item) in items.into_iter().enumerate() {
        let remaining = n - i - 1;
        let reserve = if remaining > 0 {
            format!("[... {} more {what} omitted]", remaining + 1).chars().count()
        } else {
            0
        };
        let len = item.chars().count();
        if used + len + reserve <= limit {
            used += len;
            out.push(item);
            continue;
        }
        // Try a truncated form of this item before giving up on the rest.
        let room = limit.saturating_sub(used + reserve);
        if room >= 40 {
            let t = truncate_middle(&item, room);
            used += t.chars().count();
            out.push(t);
            if remaining == 0 {
                return out;
            }
            let marker = format!("[... {remaining} more {what} omitted]");
            if used + marker.chars().count() <= limit {
                out.push(marker);
            }
            return out;
        }
        let marker = format!("[... {} more {what} omitted]", remaining + 1);
        if used + marker.chars().count() <= limit {
            out.push(marker);
        }
        return out;
    }
    out
}

fn frame_line() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"^\s*#\d+\s+0x[0-9a-fA-F]+").unwrap())
}

fn compiler_diag() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"^\S+:\d+(:\d+)?: (fatal )?error:").unwrap())
}

fn failing_test() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"^\s*(FAIL:|FAILED\b|not ok\b|ERROR: test)").unwrap())
}

/// Picks the diagnostic core of a verification log: the first error line,
/// up to eight frames of the first stack, the sanitizer summary, and
/// failing-test lines. Falls back to the log's last lines.
pub fn extract_failure_log(raw: &str) -> String {
    if raw.trim().is_empty() {
        return String::new();
    }
    let lines: Vec<&str> = raw.lines().collect();
    let mut picked: Vec<&str> = Vec::new();

    if let Some(first) = lines.iter().find(|l| {
        l.contains("ERROR:") || l.contains("FAILED") || compiler_diag().is_match(l)
    }) {
        picked.push(first);
    }
    let mut frames = 0;
    let mut in_stack = false;
    for l in &lines {
        if frame_line().is_match(l) {
            in_stack = true;
            if frames < MAX_FRAMES {
                picked.push(l);
                frames += 1;
            }
        } else if in_stack {
            break;
        }
    }
    if let Some(summary) = lines.iter().find(|l| l.starts_with("SUMMARY:")) {
        if !picked.contains(summary) {
            picked.push(summary);
        }
    }
    for l in lines.iter().filter(|l| failing_test().is_match(l)).take(MAX_FAILING_TESTS) {
        if !picked.contains(l) {
            picked.push(l);
        }
    }
    if picked.is_empty() {
        picked = lines[lines.len().saturating_sub(FALLBACK_TAIL_LINES)..].to_vec();
    }
    picked.join("\n")
}

fn merge_visited(visited: &[(String, usize, usize)]) -> Vec<String> {
    let mut out: Vec<(String, usize, usize)> = Vec::new();
    for (f, a, b) in visited {
        if let Some(prev) = out.iter_mut().find(|(pf, pa, pb)| pf == f && *a <= *pb + 1 && *pa <= *b + 1) {
            prev.1 = prev.1.min(*a);
            prev.2 = prev.2.max(*b);
        } else {
            out.push((f.clone(), *a, *b));
        }
    }
    out.into_iter().map(|(f, a, b)| format!("{f}:{a}-{b}")).collect()
}

/// Fills the three-field template from raw verification logs and the
/// session trace, keeping the total within `budget` characters.
pub fn log_compress(raw_logs: &str, trace: &SessionTrace, budget: usize) -> CompressedContext {
    let per_field = budget / 3;
    let visited = fit_list(merge_visited(&trace.visited), per_field, "ranges");
    let hunks: Vec<String> = diff::parse(&trace.applied_diff)
        .map(|files| {
            files
                .iter()
                .flat_map(|f| f.hunks.iter().map(move |h| format!("{}\n{}", f.path(), h.text)))
                .collect()
        })
        .unwrap_or_default();
    let applied_hunks = fit_list(hunks, per_field, "hunks");
    let failure_log = truncate_middle(&extract_failure_log(raw_logs), per_field);
    CompressedContext {
        visited,
        applied_hunks,
        failure_log,
    }
}
