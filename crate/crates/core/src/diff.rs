//! Minimal unified-diff reader.
//!
//! Accepts the output of `git diff` as well as plain `diff -u`, checks hunk
//! header counts against hunk bodies, and exposes per-file hunks so callers
//! can summarize or validate patches without shelling out.

use std::fmt;

use similar::TextDiff;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Hunk {
    pub old_start: usize,
    pub old_len: usize,
    pub new_start: usize,
    pub new_len: usize,
    /// Header line followed by every body line, exactly as in the source.
    pub text: String,
    pub removed: Vec<String>,
    pub added: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FileDiff {
    pub old_path: String,
    pub new_path: String,
    pub hunks: Vec<Hunk>,
}

impl FileDiff {
    /// The path that exists after the patch, or the old path for deletions.
    pub fn path(&self) -> &str {
        if self.new_path == "/dev/null" {
            &self.old_path
        } else {
            &self.new_path
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DiffParseError {
    pub line: usize,
    pub message: String,
}

impl fmt::Display for DiffParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}: {}", self.line, self.message)
    }
}

impl std::error::Error for DiffParseError {}

fn strip_prefix_path(raw: &str) -> String {
    // `--- a/src/x.c\t2024-01-01 ...` -> `src/x.c`
    let path = raw.split('\t').next().unwrap_or(raw).trim_end();
    if path == "/dev/null" {
        return path.to_string();
    }
    path.strip_prefix("a/")
        .or_else(|| path.strip_prefix("b/"))
        .unwrap_or(path)
        .to_string()
}

fn parse_range(s: &str) -> Option<(usize, usize)> {
    let s = &s[1..];
    match s.split_once(',') {
        Some((a, b)) => Some((a.parse().ok()?, b.parse().ok()?)),
        None => Some((s.parse().ok()?, 1)),
    }
}

fn parse_hunk_header(line: &str) -> Option<(usize, usize, usize, usize)> {
    let rest = line.strip_prefix("@@ ")?;
    let end = rest.find(" @@")?;
    let mut parts = rest[..end].split_whitespace();
    let old = parts.next().filter(|p| p.starts_with('-'))?;
    let new = parts.next().filter(|p| p.starts_with('+'))?;
    let (os, ol) = parse_range(old)?;
    let (ns, nl) = parse_range(new)?;
    Some((os, ol, ns, nl))
}

/// Parses unified-diff text into per-file hunks.
///
/// Text that contains no file headers at all is an error; so is a hunk whose
/// body does not match its header counts.
pub fn parse(text: &str) -> Result<Vec<FileDiff>, DiffParseError> {
    let lines: Vec<&str> = text.lines().collect();
    let mut files: Vec<FileDiff> = Vec::new();
    let mut i = 0;
    while i < lines.len() {
        let line = lines[i];
        if let Some(old) = line.strip_prefix("--- ") {
            let Some(new) = lines.get(i + 1).and_then(|l| l.strip_prefix("+++ ")) else {
                return Err(DiffParseError {
                    line: i + 2,
                    message: "expected `+++` header after `---`".into(),
                });
            };
            files.push(FileDiff {
                old_path: strip_prefix_path(old),
                new_path: strip_prefix_path(new),
                hunks: Vec::new(),
            });
            i += 2;
            continue;
        }
        if line.starts_with("@@") {
            let Some(file) = files.last_mut() else {
                return Err(DiffParseError {
                    line: i + 1,
                    message: "hunk before any file header".into(),
                });
            };
            let (old_start, old_len, new_start, new_len) =
                parse_hunk_header(line).ok_or_else(|| DiffParseError {
                    line: i + 1,
                    message: format!("malformed hunk header `{line}`"),
                })?;
            let mut text = String::from(line);
            text.push('\n');
            let (mut seen_old, mut seen_new) = (0usize, 0usize);
            let mut removed = Vec::new();
            let mut added = Vec::new();
            i += 1;
            while i < lines.len() && (seen_old < old_len || seen_new < new_len) {
                let body = lines[i];
                match body.as_bytes().first() {
                    Some(b' ') => {
                        seen_old += 1;
                        seen_new += 1;
                    }
                    // Some tools drop the leading space on empty context lines.
                    None => {
                        seen_old += 1;
                        seen_new += 1;
                    }
                    Some(b'-') => {
                        seen_old += 1;
                        removed.push(body[1..].to_string());
                    }
                    Some(b'+') => {
                        seen_new += 1;
                        added.push(body[1..].to_string());
                    }
                    Some(b'\\') => {}
                    _ => break,
                }
                text.push_str(body);
                text.push('\n');
                i += 1;
            }
            if seen_old != old_len || seen_new != new_len {
                return Err(DiffParseError {
                    line: i,
                    message: format!(
                        "hunk body has -{seen_old}/+{seen_new} lines, header says -{old_len}/+{new_len}"
                    ),
                });
            }
            while i < lines.len() && lines[i].starts_with('\\') {
                text.push_str(lines[i]);
                text.push('\n');
                i += 1;
            }
            file.hunks.push(Hunk {
                old_start,
                old_len,
                new_start,
                new_len,
                text,
                removed,
                added,
            });
            continue;
        }
        // `diff --git`, `index`, mode lines, `Binary files ...`: metadata.
        i += 1;
    }
    if files.is_empty() {
        return Err(DiffParseError {
            line: 1,
            message: "no file headers found".into(),
        });
    }
    Ok(files)
}

pub fn is_valid(text: &str) -> bool {
    parse(text).is_ok()
}

/// All hunks of a diff, in file order. Unparseable input yields nothing.
pub fn hunks(text: &str) -> Vec<Hunk> {
    parse(text)
        .map(|files| files.into_iter().flat_map(|f| f.hunks).collect())
        .unwrap_or_default()
}

/// Unified diff between two texts with the given header labels.
pub fn unified(old: &str, new: &str, old_label: &str, new_label: &str) -> String {
    TextDiff::from_lines(old, new)
        .unified_diff()
        .context_radius(3)
        .header(old_label, new_label)
        .to_string()
}

/// One-line description of what a hunk removes or adds, used in templated
/// insight text.
pub fn summarize_lines(lines: &[String]) -> String {
    let joined: Vec<&str> = lines.iter().map(|l| l.trim()).filter(|l| !l.is_empty()).collect();
    if joined.is_empty() {
        return "nothing".to_string();
    }
    let mut s = joined.join(" ");
    if s.chars().count() > 120 {
        s = s.chars().take(117).collect::<String>() + "...";
    }
    format!("`{s}`")
}
