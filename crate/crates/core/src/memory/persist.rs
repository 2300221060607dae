//! `memory.jsonl`: one JSON object per line, tagged with its tier.

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{L1Entry, L2Entry, L3Entry, MemoryEntry, MemoryError, MemoryStore, RetrievalKeys, Tier};

#[derive(Debug, Serialize, Deserialize)]
struct Record {
    tier: Tier,
    project: String,
    cwe: String,
    language: String,
    instance_id: String,
    description: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    fix_patch: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    rationale: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    fail_patch: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    correction_delta: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    transition_insight: Option<String>,
    /// Completed tasks since the entry was last retrieved.
    #[serde(default)]
    idle_tasks: u64,
}

impl Record {
    fn from_entry(entry: &MemoryEntry, idle_tasks: u64) -> Self {
        let k = entry.keys().clone();
        let mut r = Record {
            tier: entry.tier(),
            project: k.project,
            cwe: k.cwe,
            language: k.language,
            instance_id: k.instance_id,
            description: k.description,
            fix_patch: None,
            rationale: None,
            fail_patch: None,
            correction_delta: None,
            transition_insight: None,
            idle_tasks,
        };
        match entry {
            MemoryEntry::L1(e) => r.fix_patch = Some(e.fix_patch.clone()),
            MemoryEntry::L2(e) => {
                r.fix_patch = Some(e.fix_patch.clone());
                r.rationale = Some(e.rationale.clone());
            }
            MemoryEntry::L3(e) => {
                r.fail_patch = Some(e.fail_patch.clone());
                r.correction_delta = Some(e.correction_delta.clone());
                r.transition_insight = Some(e.transition_insight.clone());
            }
        }
        r
    }

    fn into_entry(self) -> Result<(MemoryEntry, u64), String> {
        let keys = RetrievalKeys {
            project: self.project,
            cwe: self.cwe,
            language: self.language,
            instance_id: self.instance_id,
            description: self.description,
        };
        let need = |v: Option<String>, name: &str| v.ok_or_else(|| format!("missing `{name}`"));
        let entry = match self.tier {
            Tier::L1 => MemoryEntry::L1(L1Entry {
                keys,
                fix_patch: need(self.fix_patch, "fix_patch")?,
            }),
            Tier::L2 => MemoryEntry::L2(L2Entry {
                keys,
                fix_patch: need(self.fix_patch, "fix_patch")?,
                rationale: need(self.rationale, "rationale")?,
            }),
            Tier::L3 => MemoryEntry::L3(L3Entry {
                keys,
                fail_patch: need(self.fail_patch, "fail_patch")?,
                correction_delta: need(self.correction_delta, "correction_delta")?,
                transition_insight: need(self.transition_insight, "transition_insight")?,
            }),
        };
        Ok((entry, self.idle_tasks))
    }
}

/// Writes the store atomically (temp file + rename), tiers in L1, L2, L3
/// order and insertion order within a tier.
pub fn save(store: &MemoryStore, path: &Path) -> Result<(), MemoryError> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    {
        let mut w = std::io::BufWriter::new(tmp.as_file_mut());
        for tier in Tier::ALL {
            for stored in store.tier(tier) {
                let idle = store.idle_tasks(&stored.entry.id()).unwrap_or(0);
                let line = serde_json::to_string(&Record::from_entry(&stored.entry, idle))
                    .map_err(|e| MemoryError::Io(e.into()))?;
                w.write_all(line.as_bytes())?;
                w.write_all(b"\n")?;
            }
        }
        w.flush()?;
    }
    tmp.persist(path).map_err(|e| MemoryError::Io(e.error))?;
    Ok(())
}

pub fn load(path: &Path) -> Result<MemoryStore, MemoryError> {
    let file = fs::File::open(path)?;
    let mut store = MemoryStore::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let corrupt = |message: String| MemoryError::Corrupt { line: idx + 1, message };
        let record: Record = serde_json::from_str(&line).map_err(|e| corrupt(e.to_string()))?;
        let (entry, idle) = record.into_entry().map_err(corrupt)?;
        entry.validate().map_err(|e| corrupt(e.to_string()))?;
        if store.get(&entry.id()).is_some() {
            return Err(corrupt(format!("duplicate {} instance `{}`", entry.tier(), entry.keys().instance_id)));
        }
        store.restore(entry, idle);
    }
    store.finish_restore();
    Ok(store)
}

/// Loads `path`, or returns an empty store if it does not exist yet.
pub fn load_or_default(path: &Path) -> Result<MemoryStore, MemoryError> {
    if path.exists() {
        load(path)
    } else {
        Ok(MemoryStore::new())
    }
}
