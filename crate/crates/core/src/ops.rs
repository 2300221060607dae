//! Operations behind the command-line entry points: corpus ingestion,
//! memory administration, and repair runs.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io::BufRead;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use rayon::prelude::*;
use serde::Serialize;

use crate::agent::{Agent, AgentError, RepairTask, SessionReport, TaskError};
use crate::config::{Config, ConfigError};
use crate::memory::{
    self, normalize_cwe, InsertOutcome, L1Entry, MemoryEntry, MemoryError, MemoryStore, RetrievalKeys, SharedMemory,
    Tier,
};
use crate::retrieval::embed::Embedder;
use crate::workspace::ensure_git_repo;

pub const CORPUS_FIELDS: [&str; 6] = ["project", "cwe", "language", "instance_id", "description", "fix_patch"];

/// Column names recognized without configuration, per field.
fn default_aliases(field: &str) -> &'static [&'static str] {
    match field {
        "project" => &["project", "repo_name", "repo", "repository"],
        "cwe" => &["cwe", "cwe_id", "cwe_ids"],
        "language" => &["language", "programming_language", "lang"],
        "instance_id" => &["instance_id", "cve_id", "id"],
        "description" => &["description", "cve_description", "summary"],
        "fix_patch" => &["fix_patch", "diff", "patch"],
        _ => &[],
    }
}

#[derive(Debug, thiserror::Error)]
pub enum IngestError {
    #[error("cannot read corpus {0}: {1}")]
    UnreadableCorpus(PathBuf, String),
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct IngestCounts {
    pub inserted: usize,
    pub merged: usize,
    pub rejected: usize,
    /// `(line, reason)` for each rejected row.
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub rejections: Vec<(usize, String)>,
}

/// Maps corpus column names onto the six corpus fields. Explicit entries
/// (`field -> column`) override the built-in aliases.
#[derive(Debug, Clone, Default)]
pub struct HeaderMap {
    pub overrides: BTreeMap<String, String>,
}

impl HeaderMap {
    fn pick<'r>(&self, field: &str, row: &'r BTreeMap<String, String>) -> Option<&'r str> {
        if let Some(col) = self.overrides.get(field) {
            return row.get(col).map(String::as_str);
        }
        default_aliases(field)
            .iter()
            .find_map(|c| row.get(*c))
            .map(String::as_str)
    }

    fn to_entry(&self, row: &BTreeMap<String, String>) -> Result<L1Entry, String> {
        let get = |f: &str| -> Result<String, String> {
            match self.pick(f, row) {
                Some(v) if !v.trim().is_empty() => Ok(v.to_string()),
                _ => Err(format!("missing field `{f}`")),
            }
        };
        Ok(L1Entry {
            keys: RetrievalKeys {
                project: get("project")?.trim().to_string(),
                cwe: normalize_cwe(&get("cwe")?),
                language: get("language")?.trim().to_ascii_lowercase(),
                instance_id: get("instance_id")?.trim().to_string(),
                description: get("description")?,
            },
            fix_patch: get("fix_patch")?,
        })
    }
}

fn is_jsonl(path: &Path, first_line: Option<&str>) -> bool {
    match path.extension().and_then(|e| e.to_str()) {
        Some("jsonl") | Some("ndjson") | Some("json") => true,
        Some("csv") => false,
        _ => first_line.map(|l| l.trim_start().starts_with('{')).unwrap_or(false),
    }
}

/// Reads corpus rows as `(line number, column -> value)`, or a per-line
/// parse error.
fn read_rows(path: &Path) -> Result<Vec<(usize, Result<BTreeMap<String, String>, String>)>, IngestError> {
    let unreadable = |e: String| IngestError::UnreadableCorpus(path.to_path_buf(), e);
    let file = fs::File::open(path).map_err(|e| unreadable(e.to_string()))?;
    let mut reader = std::io::BufReader::new(file);
    let mut first = String::new();
    reader.read_line(&mut first).map_err(|e| unreadable(e.to_string()))?;
    let mut rows = Vec::new();
    if is_jsonl(path, Some(&first)) {
        let all = std::iter::once(Ok(first)).chain(reader.lines());
        for (i, line) in all.enumerate() {
            let line = line.map_err(|e| unreadable(e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            let parsed = serde_json::from_str::<serde_json::Map<String, serde_json::Value>>(&line)
                .map(|m| {
                    m.into_iter()
                        .filter(|(_, v)| !v.is_null())
                        .map(|(k, v)| {
                            let s = match v {
                                serde_json::Value::String(s) => s,
                                other => other.to_string(),
                            };
                            (k.to_ascii_lowercase(), s)
                        })
                        .collect()
                })
                .map_err(|e| format!("invalid JSON: {e}"));
            rows.push((i + 1, parsed));
        }
    } else {
        let text = fs::read_to_string(path).map_err(|e| unreadable(e.to_string()))?;
        let line_at = |pos: Option<&csv::Position>| {
            pos.map(|p| {
                let b = text.as_bytes();
                let mut at = p.byte() as usize;
                while at < b.len() && (b[at] == b'\n' || b[at] == b'\r') {
                    at += 1;
                }
                b[..at].iter().filter(|&&c| c == b'\n').count() + 1
            })
            .unwrap_or(0)
        };
        let mut csv = csv::ReaderBuilder::new().flexible(true).from_reader(text.as_bytes());
        let headers: Vec<String> = csv
            .headers()
            .map_err(|e| unreadable(e.to_string()))?
            .iter()
            .map(|h| h.trim().to_ascii_lowercase())
            .collect();
        for rec in csv.records() {
            match rec {
                Ok(r) => {
                    let line = line_at(r.position());
                    let row = headers.iter().cloned().zip(r.iter().map(String::from)).collect();
                    rows.push((line, Ok(row)));
                }
                Err(e) => {
                    let line = line_at(e.position());
                    rows.push((line, Err(e.to_string())));
                }
            }
        }
    }
    Ok(rows)
}

/// Inserts every valid corpus row as an L1 entry.
pub fn ingest(
    corpus: &Path,
    store: &mut MemoryStore,
    embedder: &dyn Embedder,
    headers: &HeaderMap,
) -> Result<IngestCounts, IngestError> {
    let mut counts = IngestCounts::default();
    for (line, row) in read_rows(corpus)? {
        let entry = row.and_then(|r| headers.to_entry(&r));
        let outcome = entry.and_then(|e| store.insert(MemoryEntry::L1(e), embedder).map_err(|e| e.to_string()));
        match outcome {
            Ok(InsertOutcome::Inserted) => counts.inserted += 1,
            Ok(InsertOutcome::Merged { .. }) => counts.merged += 1,
            Err(reason) => {
                log::warn!("{}:{line}: rejected: {reason}", corpus.display());
                counts.rejected += 1;
                counts.rejections.push((line, reason));
            }
        }
    }
    Ok(counts)
}

#[derive(Debug, Clone, Default)]
pub struct InspectFilter {
    pub tier: Option<Tier>,
    pub project: Option<String>,
    pub cwe: Option<String>,
    pub language: Option<String>,
    /// Substring of the instance id.
    pub instance: Option<String>,
}

impl InspectFilter {
    fn matches(&self, tier: Tier, k: &RetrievalKeys) -> bool {
        self.tier.is_none_or(|t| t == tier)
            && self.project.as_ref().is_none_or(|p| *p == k.project)
            && self.cwe.as_ref().is_none_or(|c| normalize_cwe(c) == k.cwe)
            && self.language.as_ref().is_none_or(|l| l.eq_ignore_ascii_case(&k.language))
            && self.instance.as_ref().is_none_or(|s| k.instance_id.contains(s.as_str()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct InspectRow {
    pub tier: String,
    pub instance_id: String,
    pub project: String,
    pub cwe: String,
    pub language: String,
    pub idle_tasks: u64,
    pub description: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct InspectReport {
    pub counts: BTreeMap<String, usize>,
    pub completed_tasks: u64,
    pub entries: Vec<InspectRow>,
}

pub fn inspect(store: &MemoryStore, filter: &InspectFilter) -> InspectReport {
    let counts = Tier::ALL.iter().map(|t| (t.to_string(), store.count(*t))).collect();
    let mut entries = Vec::new();
    for tier in Tier::ALL {
        for s in store.tier(tier) {
            let k = s.keys();
            if !filter.matches(tier, k) {
                continue;
            }
            let id = s.entry.id();
            entries.push(InspectRow {
                tier: tier.to_string(),
                instance_id: k.instance_id.clone(),
                project: k.project.clone(),
                cwe: k.cwe.clone(),
                language: k.language.clone(),
                idle_tasks: store.idle_tasks(&id).unwrap_or(0),
                description: k.description.clone(),
            });
        }
    }
    InspectReport {
        counts,
        completed_tasks: store.completed_tasks(),
        entries,
    }
}

impl InspectReport {
    pub fn render_table(&self) -> String {
        let mut out = String::new();
        for (tier, n) in &self.counts {
            let _ = writeln!(out, "{tier}: {n}");
        }
        let _ = writeln!(out, "completed tasks: {}", self.completed_tasks);
        if self.entries.is_empty() {
            return out;
        }
        out.push('\n');
        let w_id = self.entries.iter().map(|e| e.instance_id.len()).max().unwrap_or(0).max(11);
        let w_proj = self.entries.iter().map(|e| e.project.len()).max().unwrap_or(0).max(7);
        let _ = writeln!(
            out,
            "{:<4} {:<w_id$} {:<w_proj$} {:<10} {:<8} {:>5}  DESCRIPTION",
            "TIER", "INSTANCE_ID", "PROJECT", "CWE", "LANG", "IDLE"
        );
        for e in &self.entries {
            let desc: String = e.description.split_whitespace().collect::<Vec<_>>().join(" ");
            let desc: String = if desc.chars().count() > 60 {
                desc.chars().take(57).collect::<String>() + "..."
            } else {
                desc
            };
            let _ = writeln!(
                out,
                "{:<4} {:<w_id$} {:<w_proj$} {:<10} {:<8} {:>5}  {}",
                e.tier, e.instance_id, e.project, e.cwe, e.language, e.idle_tasks, desc
            );
        }
        out
    }
}

/// Window value meaning "never prune".
pub const PRUNE_NEVER: u64 = u64::MAX;

pub fn prune(store: &mut MemoryStore, window: u64) -> usize {
    store.prune(window.max(1))
}

/// Copies `src` into `dst` (replacing `dst`) and makes it a git checkout.
pub fn prepare_workspace(src: &Path, dst: &Path) -> std::io::Result<PathBuf> {
    if dst.exists() {
        fs::remove_dir_all(dst)?;
    }
    fs::create_dir_all(dst)?;
    for entry in walkdir::WalkDir::new(src).min_depth(1) {
        let entry = entry.map_err(std::io::Error::other)?;
        let rel = entry.path().strip_prefix(src).expect("walk stays under src");
        let target = dst.join(rel);
        let ft = entry.file_type();
        if ft.is_dir() {
            fs::create_dir_all(&target)?;
        } else if ft.is_symlink() {
            std::os::unix::fs::symlink(fs::read_link(entry.path())?, &target)?;
        } else {
            fs::copy(entry.path(), &target)?;
        }
    }
    ensure_git_repo(dst).map_err(std::io::Error::other)?;
    Ok(dst.to_path_buf())
}

#[derive(Debug, thiserror::Error)]
pub enum RepairError {
    #[error(transparent)]
    Task(#[from] TaskError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Memory(#[from] MemoryError),
    #[error(transparent)]
    Setup(#[from] AgentError),
    #[error("workspace preparation failed: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone)]
pub struct RepairOptions {
    pub out_dir: PathBuf,
    /// Scripted transcript overriding the config and the task directory.
    pub transcript: Option<PathBuf>,
    /// Run on the task's repository directly instead of a copy.
    pub in_place: bool,
}

#[derive(Debug)]
pub struct RepairRun {
    pub report: SessionReport,
    pub report_path: PathBuf,
    pub trajectory_path: PathBuf,
}


/// Runs one task against a shared memory store.
pub fn repair_task(
    task_path: &Path,
    config: &Config,
    store: &SharedMemory,
    embedder: &dyn Embedder,
    opts: &RepairOptions,
) -> Result<RepairRun, RepairError> {
    let mut task = RepairTask::load(task_path)?;
    let task_dir = task_path.parent().unwrap_or(Path::new("."));
    let local_transcript = task_dir.join("transcript.jsonl");
    let transcript = opts
        .transcript
        .clone()
        .or_else(|| local_transcript.is_file().then_some(local_transcript));
    let mut gateway = config.gateway(transcript.as_deref())?;
    if !opts.in_place {
        task.root = prepare_workspace(&task.root, &opts.out_dir.join("workspace"))?;
    } else {
        ensure_git_repo(&task.root).map_err(std::io::Error::other)?;
    }
    let mut agent = Agent::new(&mut *gateway, embedder, config.agent_config());
    let report = agent.run_session(&task, store)?;
    let (report_path, trajectory_path) = report.write_to(&opts.out_dir)?;
    Ok(RepairRun {
        report,
        report_path,
        trajectory_path,
    })
}

/// Finds `task.json` files directly under `dir` or one level down.
pub fn discover_tasks(dir: &Path) -> std::io::Result<Vec<PathBuf>> {
    let mut found = Vec::new();
    for entry in walkdir::WalkDir::new(dir).min_depth(1).max_depth(2).sort_by_file_name() {
        let entry = entry.map_err(std::io::Error::other)?;
        let name = entry.file_name().to_string_lossy();
        if entry.file_type().is_file() && (name == "task.json" || (entry.depth() == 1 && name.ends_with(".task.json"))) {
            found.push(entry.into_path());
        }
    }
    Ok(found)
}

/// Runs many tasks on a bounded worker pool. Task `i` writes into
/// `out_dir/NNN-<task dir name>/`, numbered in input order.
pub fn repair_many(
    tasks: &[PathBuf],
    config: &Config,
    store: &SharedMemory,
    embedder: &dyn Embedder,
    out_dir: &Path,
    jobs: usize,
    transcript: Option<&Path>,
) -> Vec<(PathBuf, Result<RepairRun, RepairError>)> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .expect("thread pool");
    let results = Mutex::new(Vec::new());
    pool.install(|| {
        tasks.par_iter().enumerate().for_each(|(i, t)| {
            let name = t
                .parent()
                .and_then(|p| p.file_name())
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_else(|| format!("task{i}"));
            let opts = RepairOptions {
                out_dir: out_dir.join(format!("{i:03}-{name}")),
                transcript: transcript.map(Path::to_path_buf),
                in_place: false,
            };
            let r = repair_task(t, config, store, embedder, &opts);
            results.lock().expect("results lock").push((i, t.clone(), r));
        })
    });
    let mut results = results.into_inner().expect("results lock");
    results.sort_by_key(|(i, _, _)| *i);
    results.into_iter().map(|(_, t, r)| (t, r)).collect()
}

/// Loads the memory file (empty store if missing) with the configured
/// dedup threshold.
pub fn open_memory(path: &Path, config: &Config) -> Result<MemoryStore, MemoryError> {
    Ok(memory::load_or_default(path)?.with_dedup_threshold(config.retrieval.dedup_threshold))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::retrieval::embed::DeterministicEmbedder;

    const PATCH: &str = "--- a/x.c\n+++ b/x.c\n@@ -1 +1 @@\n-a\n+b\n";

    fn write(dir: &Path, name: &str, body: &str) -> PathBuf {
        let p = dir.join(name);
        fs::write(&p, body).unwrap();
        p
    }

    #[test]
    fn empty_corpus() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "c.jsonl", "");
        let mut s = MemoryStore::new();
        let c = ingest(&p, &mut s, &DeterministicEmbedder::default(), &HeaderMap::default()).unwrap();
        assert_eq!((c.inserted, c.merged, c.rejected), (0, 0, 0));
    }

    #[test]
    fn csv_with_aliases_and_rejects() {
        let dir = tempfile::tempdir().unwrap();
        let body = format!(
            "repo_name,cwe_id,programming_language,cve_id,description,diff\n\
             demo,787,C,CVE-2020-1,heap overflow in parser,\"{p}\"\n\
             demo,CWE-125,C,CVE-2020-2,out of bounds read in lexer tables,\"{p2}\"\n\
             demo,CWE-125,C,,no id,\"{p}\"\n",
            p = PATCH,
            p2 = PATCH.replace("+b", "+c")
        );
        let p = write(dir.path(), "c.csv", &body);
        let mut s = MemoryStore::new();
        let c = ingest(&p, &mut s, &DeterministicEmbedder::default(), &HeaderMap::default()).unwrap();
        assert_eq!((c.inserted, c.merged, c.rejected), (2, 0, 1));
        assert_eq!(s.tier(Tier::L1)[0].keys().cwe, "CWE-787");
        assert_eq!(s.tier(Tier::L1)[0].keys().language, "c");
        assert!(c.rejections[0].1.contains("instance_id"));
        let bad = body.find("demo,CWE-125,C,,").unwrap();
        assert_eq!(c.rejections[0].0, body[..bad].matches('\n').count() + 1);
    }

    #[test]
    fn header_overrides() {
        let dir = tempfile::tempdir().unwrap();
        let row = serde_json::json!({"proj":"p","weakness":"CWE-20","language":"c","instance_id":"p.cve-2021-3","description":"d","fix_patch":PATCH});
        let p = write(dir.path(), "c.jsonl", &format!("{row}\n"));
        let mut h = HeaderMap::default();
        h.overrides.insert("project".into(), "proj".into());
        h.overrides.insert("cwe".into(), "weakness".into());
        let mut s = MemoryStore::new();
        let c = ingest(&p, &mut s, &DeterministicEmbedder::default(), &h).unwrap();
        assert_eq!(c.inserted, 1);
        assert_eq!(s.tier(Tier::L1)[0].keys().project, "p");
    }

    #[test]
    fn unreadable_corpus() {
        let mut s = MemoryStore::new();
        let r = ingest(Path::new("/nonexistent/c.csv"), &mut s, &DeterministicEmbedder::default(), &HeaderMap::default());
        assert!(matches!(r, Err(IngestError::UnreadableCorpus(..))));
    }

    #[test]
    fn inspect_empty_and_filtered() {
        let s = MemoryStore::new();
        let r = inspect(&s, &InspectFilter::default());
        assert_eq!(r.counts.values().sum::<usize>(), 0);
        assert!(r.render_table().contains("L1: 0"));
    }

    #[test]
    fn workspace_copy_is_independent_checkout() {
        let src = tempfile::tempdir().unwrap();
        fs::create_dir(src.path().join("sub")).unwrap();
        fs::write(src.path().join("sub/a.c"), "int a;\n").unwrap();
        let out = tempfile::tempdir().unwrap();
        let dst = prepare_workspace(src.path(), &out.path().join("ws")).unwrap();
        assert_eq!(fs::read_to_string(dst.join("sub/a.c")).unwrap(), "int a;\n");
        assert!(dst.join(".git").exists());
        assert!(!src.path().join(".git").exists());
    }
}
