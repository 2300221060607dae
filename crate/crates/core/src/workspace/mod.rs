//! The tool surface the agent uses on a repository checkout.

pub mod compress;
pub mod exec;
pub mod shell;
pub mod snapshot;

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Component, Path, PathBuf};
use std::time::Duration;

use regex::Regex;
use serde::{Deserialize, Serialize};
use walkdir::WalkDir;

pub use compress::{log_compress, truncate_middle, CompressedContext, SessionTrace};
pub use shell::{ShellError, ShellSession};
pub use snapshot::{ensure_git_repo, GitSnapshots, SnapshotError, SnapshotId};

use crate::localizer::MAX_FILE_BYTES;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ToolName {
    View,
    Search,
    Create,
    StrReplace,
    Bash,
    CheckVul,
    LogCompress,
    IterGrep,
    Submit,
}

impl ToolName {
    pub const ALL: [ToolName; 9] = [
        ToolName::View,
        ToolName::Search,
        ToolName::Create,
        ToolName::StrReplace,
        ToolName::Bash,
        ToolName::CheckVul,
        ToolName::LogCompress,
        ToolName::IterGrep,
        ToolName::Submit,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ToolName::View => "view",
            ToolName::Search => "search",
            ToolName::Create => "create",
            ToolName::StrReplace => "str_replace",
            ToolName::Bash => "bash",
            ToolName::CheckVul => "check_vul",
            ToolName::LogCompress => "log_compress",
            ToolName::IterGrep => "iter_grep",
            ToolName::Submit => "submit",
        }
    }

    pub fn parse(s: &str) -> Option<ToolName> {
        ToolName::ALL.into_iter().find(|t| t.as_str() == s)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToolCall {
    pub name: ToolName,
    #[serde(default)]
    pub args: BTreeMap<String, String>,
}

impl ToolCall {
    pub fn new(name: ToolName, args: &[(&str, &str)]) -> Self {
        Self {
            name,
            args: args.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect(),
        }
    }

    pub fn arg(&self, key: &str) -> Option<&str> {
        self.args.get(key).map(String::as_str)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ToolErrorKind {
    NotFound,
    OutsideWorkspace,
    BadPattern,
    AlreadyExists,
    NoMatch,
    AmbiguousMatch,
    Timeout,
    SessionDead,
    SnapshotMissing,
    InvalidArgs,
    MalformedToolCall,
    UnknownTool,
    OracleTimeout,
    BuildToolMissing,
    Io,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToolResult {
    pub ok: bool,
    pub output: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error_kind: Option<ToolErrorKind>,
}

impl ToolResult {
    pub fn ok(output: impl Into<String>) -> Self {
        Self {
            ok: true,
            output: output.into(),
            error_kind: None,
        }
    }

    pub fn err(kind: ToolErrorKind, output: impl Into<String>) -> Self {
        Self {
            ok: false,
            output: output.into(),
            error_kind: Some(kind),
        }
    }
}

/// Transcript/log line for one tool invocation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToolExchange {
    pub call: ToolCall,
    pub result: ToolResult,
}

#[derive(Debug, Clone)]
pub struct WorkspaceConfig {
    pub output_cap: usize,
    pub bash_timeout: Duration,
    pub search_limit: usize,
    /// Apply `search_limit` per file instead of globally.
    pub search_limit_per_file: bool,
    pub search_context: usize,
    pub view_depth: usize,
}

impl Default for WorkspaceConfig {
    fn default() -> Self {
        Self {
            output_cap: 20_000,
            bash_timeout: Duration::from_secs(300),
            search_limit: 5,
            search_limit_per_file: false,
            search_context: 2,
            view_depth: 2,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum WorkspaceError {
    #[error(transparent)]
    Snapshot(#[from] SnapshotError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SearchMatch {
    pub file: String,
    pub line: usize,
}

/// A repository checkout with a pristine snapshot taken at open time.
pub struct Workspace {
    root: PathBuf,
    snapshots: GitSnapshots,
    original: SnapshotId,
    shell: Option<ShellSession>,
    config: WorkspaceConfig,
    visited: Vec<(String, usize, usize)>,
}

impl Workspace {
    pub fn open(root: &Path, config: WorkspaceConfig) -> Result<Self, WorkspaceError> {
        let root = root.canonicalize()?;
        let snapshots = GitSnapshots::open(&root)?;
        let original = snapshots.snapshot()?;
        Ok(Self {
            root,
            snapshots,
            original,
            shell: None,
            config,
            visited: Vec::new(),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn config(&self) -> &WorkspaceConfig {
        &self.config
    }

    pub fn original(&self) -> &SnapshotId {
        &self.original
    }

    /// Files and ranges shown by `view` since the last [`Self::clear_trace`].
    pub fn visited(&self) -> &[(String, usize, usize)] {
        &self.visited
    }

    pub fn clear_trace(&mut self) {
        self.visited.clear();
    }

    fn cap(&self, text: String) -> String {
        truncate_middle(&text, self.config.output_cap)
    }

    /// Maps a tool path argument onto the workspace, refusing anything that
    /// escapes the root lexically or through a symlink.
    pub fn resolve(&self, path: &str) -> Result<PathBuf, ToolResult> {
        let outside = || ToolResult::err(ToolErrorKind::OutsideWorkspace, format!("{path} is outside the workspace"));
        let p = Path::new(path);
        let joined = if p.is_absolute() { p.to_path_buf() } else { self.root.join(p) };
        let mut norm = PathBuf::new();
        for c in joined.components() {
            match c {
                Component::ParentDir => {
                    if !norm.pop() {
                        return Err(outside());
                    }
                }
                Component::CurDir => {}
                other => norm.push(other.as_os_str()),
            }
        }
        if !norm.starts_with(&self.root) {
            return Err(outside());
        }
        let mut existing = norm.as_path();
        while !existing.exists() {
            match existing.parent() {
                Some(parent) => existing = parent,
                None => break,
            }
        }
        if let Ok(real) = existing.canonicalize() {
            if !real.starts_with(&self.root) {
                return Err(outside());
            }
        }
        Ok(norm)
    }

    fn rel(&self, p: &Path) -> String {
        p.strip_prefix(&self.root).unwrap_or(p).to_string_lossy().replace('\\', "/")
    }

    /// File content with 1-based line numbers, or a directory listing to
    /// the configured depth.
    pub fn view(&mut self, path: &str, window: Option<(usize, usize)>) -> ToolResult {
        let full = match self.resolve(path) {
            Ok(p) => p,
            Err(e) => return e,
        };
        if full.is_dir() {
            let mut items: Vec<String> = WalkDir::new(&full)
                .min_depth(1)
                .max_depth(self.config.view_depth)
                .sort_by_file_name()
                .into_iter()
                .filter_entry(|e| e.file_name() != ".git")
                .filter_map(Result::ok)
                .map(|e| {
                    let r = self.rel(e.path());
                    if e.file_type().is_dir() { format!("{r}/") } else { r }
                })
                .collect();
            items.sort();
            return ToolResult::ok(self.cap(items.join("\n")));
        }
        let bytes = match fs::read(&full) {
            Ok(b) => b,
            Err(_) => return ToolResult::err(ToolErrorKind::NotFound, format!("{path} does not exist")),
        };
        let text = String::from_utf8_lossy(&bytes);
        let lines: Vec<&str> = text.lines().collect();
        let n = lines.len();
        let (start, end) = match window {
            Some((a, b)) => (a.max(1), b.min(n)),
            None => (1, n),
        };
        let mut out = String::new();
        if start <= end {
            for (i, line) in lines[start - 1..end].iter().enumerate() {
                let _ = writeln!(out, "{:>6}\t{}", start + i, line);
            }
            self.visited.push((self.rel(&full), start, end));
        } else {
            let _ = writeln!(out, "[{path} has {n} lines; window is empty]");
        }
        ToolResult::ok(self.cap(out))
    }

    /// Regex matches under `search_path`, in path order.
    pub fn search_matches(&self, pattern: &str, search_path: &str) -> Result<(Vec<SearchMatch>, usize), ToolResult> {
        let re = Regex::new(pattern)
            .map_err(|e| ToolResult::err(ToolErrorKind::BadPattern, format!("invalid pattern: {e}")))?;
        let base = self.resolve(search_path)?;
        if !base.exists() {
            return Err(ToolResult::err(ToolErrorKind::NotFound, format!("{search_path} does not exist")));
        }
        let mut shown = Vec::new();
        let mut total = 0usize;
        for entry in WalkDir::new(&base)
            .sort_by_file_name()
            .into_iter()
            .filter_entry(|e| e.file_name() != ".git")
            .filter_map(Result::ok)
            .filter(|e| e.file_type().is_file())
        {
            if entry.metadata().map(|m| m.len() > MAX_FILE_BYTES).unwrap_or(true) {
                continue;
            }
            let Ok(bytes) = fs::read(entry.path()) else { continue };
            if bytes[..bytes.len().min(8192)].contains(&0) {
                continue;
            }
            let text = String::from_utf8_lossy(&bytes);
            let rel = self.rel(entry.path());
            let mut in_file = 0;
            for (i, line) in text.lines().enumerate() {
                if re.is_match(line) {
                    total += 1;
                    let limited = if self.config.search_limit_per_file {
                        in_file >= self.config.search_limit
                    } else {
                        shown.len() >= self.config.search_limit
                    };
                    if !limited {
                        shown.push(SearchMatch { file: rel.clone(), line: i + 1 });
                        in_file += 1;
                    }
                }
            }
        }
        Ok((shown, total))
    }

    pub fn search(&self, pattern: &str, search_path: &str) -> ToolResult {
        let (matches, total) = match self.search_matches(pattern, search_path) {
            Ok(m) => m,
            Err(e) => return e,
        };
        if matches.is_empty() {
            return ToolResult::ok("No matches found.");
        }
        let ctx = self.config.search_context;
        let mut out = String::new();
        let mut cache: BTreeMap<String, Vec<String>> = BTreeMap::new();
        for m in &matches {
            let lines = cache.entry(m.file.clone()).or_insert_with(|| {
                fs::read(self.root.join(&m.file))
                    .map(|b| String::from_utf8_lossy(&b).lines().map(str::to_string).collect())
                    .unwrap_or_default()
            });
            let _ = writeln!(out, "== {}:{} ==", m.file, m.line);
            let lo = m.line.saturating_sub(ctx).max(1);
            let hi = (m.line + ctx).min(lines.len());
            for l in lo..=hi {
                let sep = if l == m.line { ':' } else { '-' };
                let _ = writeln!(out, "{l}{sep}{}", lines[l - 1]);
            }
        }
        if total > matches.len() {
            let _ = writeln!(out, "[showing {} of {total} matches; narrow the pattern or path]", matches.len());
        }
        ToolResult::ok(self.cap(out))
    }

    pub fn create(&mut self, path: &str, text: &str) -> ToolResult {
        let full = match self.resolve(path) {
            Ok(p) => p,
            Err(e) => return e,
        };
        if full.exists() {
            return ToolResult::err(ToolErrorKind::AlreadyExists, format!("{path} already exists"));
        }
        if let Some(parent) = full.parent() {
            if let Err(e) = fs::create_dir_all(parent) {
                return ToolResult::err(ToolErrorKind::Io, e.to_string());
            }
        }
        let res = fs::OpenOptions::new()
            .write(true)
            .create_new(true)
            .open(&full)
            .and_then(|mut f| f.write_all(text.as_bytes()));
        match res {
            Ok(()) => ToolResult::ok(format!("created {}", self.rel(&full))),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => {
                ToolResult::err(ToolErrorKind::AlreadyExists, format!("{path} already exists"))
            }
            Err(e) => ToolResult::err(ToolErrorKind::Io, e.to_string()),
        }
    }

    /// Replaces the single occurrence of `old`. The file is rewritten via a
    /// temporary file and rename, so a failed call leaves it untouched.
    pub fn str_replace(&mut self, path: &str, old: &str, new: &str) -> ToolResult {
        let full = match self.resolve(path) {
            Ok(p) => p,
            Err(e) => return e,
        };
        let text = match fs::read(&full) {
            Ok(b) => match String::from_utf8(b) {
                Ok(t) => t,
                Err(_) => return ToolResult::err(ToolErrorKind::InvalidArgs, format!("{path} is not UTF-8 text")),
            },
            Err(_) => return ToolResult::err(ToolErrorKind::NotFound, format!("{path} does not exist")),
        };
        if old.is_empty() {
            return ToolResult::err(ToolErrorKind::InvalidArgs, "old string must be non-empty");
        }
        let Some(first) = text.find(old) else {
            return ToolResult::err(ToolErrorKind::NoMatch, format!("no occurrence of old string in {path}"));
        };
        let next_char = text[first..].chars().next().map(char::len_utf8).unwrap_or(1);
        if text[first + next_char..].contains(old) {
            return ToolResult::err(
                ToolErrorKind::AmbiguousMatch,
                format!("old string occurs more than once in {path}; include more context"),
            );
        }
        let mut updated = String::with_capacity(text.len() + new.len());
        updated.push_str(&text[..first]);
        updated.push_str(new);
        updated.push_str(&text[first + old.len()..]);
        if let Err(e) = atomic_write(&full, updated.as_bytes()) {
            return ToolResult::err(ToolErrorKind::Io, e.to_string());
        }
        let line = text[..first].matches('\n').count() + 1;
        ToolResult::ok(format!("replaced 1 occurrence in {} at line {line}", self.rel(&full)))
    }

    pub fn bash(&mut self, command: &str, restart: bool) -> ToolResult {
        if restart || self.shell.is_none() {
            if let Some(s) = self.shell.as_mut() {
                if let Err(e) = s.restart() {
                    return ToolResult::err(ToolErrorKind::SessionDead, e.to_string());
                }
            } else {
                match ShellSession::spawn(&self.root) {
                    Ok(s) => self.shell = Some(s),
                    Err(e) => return ToolResult::err(ToolErrorKind::SessionDead, e.to_string()),
                }
            }
        }
        if command.trim().is_empty() {
            return ToolResult::ok("");
        }
        let timeout = self.config.bash_timeout;
        let shell = self.shell.as_mut().expect("shell spawned above");
        match shell.run(command, timeout) {
            Ok(out) => {
                let mut text = out.output;
                if out.exit_code != 0 {
                    let _ = write!(text, "\n[exit code {}]", out.exit_code);
                }
                ToolResult::ok(self.cap(text))
            }
            Err(ShellError::Timeout(t, partial)) => ToolResult::err(
                ToolErrorKind::Timeout,
                self.cap(format!("{partial}\n[command timed out after {}s; shell restarted]", t.as_secs())),
            ),
            Err(ShellError::SessionDead) => ToolResult::err(
                ToolErrorKind::SessionDead,
                "shell session exited; call bash with restart=true",
            ),
            Err(ShellError::Io(e)) => ToolResult::err(ToolErrorKind::SessionDead, e.to_string()),
        }
    }

    pub fn snapshot(&self) -> Result<SnapshotId, SnapshotError> {
        self.snapshots.snapshot()
    }

    pub fn rollback(&mut self, id: &SnapshotId) -> Result<(), SnapshotError> {
        self.snapshots.rollback(id)
    }

    pub fn rollback_to_original(&mut self) -> Result<(), SnapshotError> {
        let id = self.original.clone();
        self.snapshots.rollback(&id)
    }

    /// Diff of the working tree against the pristine snapshot.
    pub fn submit(&self) -> Result<String, SnapshotError> {
        self.snapshots.diff_from(&self.original)
    }

    pub fn diff_between(&self, from: &SnapshotId, to: &SnapshotId) -> Result<String, SnapshotError> {
        self.snapshots.diff_between(from, to)
    }

    /// Executes the file, search and shell tools. `iter_grep`, `check_vul`
    /// and `log_compress` need session state and are routed by the agent.
    pub fn dispatch(&mut self, call: &ToolCall) -> ToolResult {
        let need = |k: &str| {
            call.arg(k)
                .ok_or_else(|| ToolResult::err(ToolErrorKind::InvalidArgs, format!("missing argument `{k}`")))
        };
        let res = (|| -> Result<ToolResult, ToolResult> {
            Ok(match call.name {
                ToolName::View => {
                    let window = match (call.arg("start"), call.arg("end")) {
                        (Some(a), Some(b)) => Some((parse_num(a)?, parse_num(b)?)),
                        (Some(a), None) => Some((parse_num(a)?, usize::MAX)),
                        (None, Some(b)) => Some((1, parse_num(b)?)),
                        (None, None) => None,
                    };
                    self.view(need("path")?, window)
                }
                ToolName::Search => self.search(need("pattern")?, call.arg("path").unwrap_or(".")),
                ToolName::Create => self.create(need("path")?, need("text")?),
                ToolName::StrReplace => self.str_replace(need("path")?, need("old")?, need("new")?),
                ToolName::Bash => {
                    let restart = matches!(call.arg("restart"), Some("true") | Some("1"));
                    self.bash(call.arg("command").unwrap_or(""), restart)
                }
                ToolName::Submit => match self.submit() {
                    Ok(d) => ToolResult::ok(self.cap(d)),
                    Err(e) => ToolResult::err(ToolErrorKind::Io, e.to_string()),
                },
                other => ToolResult::err(
                    ToolErrorKind::UnknownTool,
                    format!("{} is not available here", other.as_str()),
                ),
            })
        })();
        res.unwrap_or_else(|e| e)
    }
}

fn parse_num(s: &str) -> Result<usize, ToolResult> {
    s.trim()
        .parse()
        .map_err(|_| ToolResult::err(ToolErrorKind::InvalidArgs, format!("`{s}` is not a line number")))
}

fn atomic_write(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let dir = path.parent().unwrap_or(Path::new("."));
    let perms = fs::metadata(path)?.permissions();
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().set_permissions(perms)?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}
