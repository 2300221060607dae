//! Three-tier experience memory.
//!
//! * L1 holds historical fixes ingested from a corpus.
//! * L2 holds fixes produced by successful repair sessions, each with a
//!   rationale explaining why the fix works.
//! * L3 holds failure-to-success transitions observed inside one session.
//!
//! All tiers share [`RetrievalKeys`]. The store deduplicates near-identical
//! entries on insert and prunes L2/L3 entries that stop being retrieved.

mod consolidate;
mod persist;
mod store;

use std::fmt;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::diff;

pub use consolidate::{consolidate_success, InsightSource, TemplateInsights};
pub use persist::{load, load_or_default, save};
pub use store::{EntryId, InsertOutcome, MemoryStore, SharedMemory, StoredEntry, DEFAULT_DEDUP_THRESHOLD};

pub const UNKNOWN_CWE: &str = "CWE-UNKNOWN";

#[derive(Debug, thiserror::Error)]
pub enum MemoryError {
    #[error("invariant violation: {0}")]
    InvariantViolation(String),
    #[error("invalid session: {0}")]
    InvalidSession(String),
    #[error("corrupt memory file at line {line}: {message}")]
    Corrupt { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Tier {
    L1,
    L2,
    L3,
}

impl Tier {
    pub const ALL: [Tier; 3] = [Tier::L1, Tier::L2, Tier::L3];

    pub(crate) fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Tier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Tier::L1 => "L1",
            Tier::L2 => "L2",
            Tier::L3 => "L3",
        })
    }
}

impl std::str::FromStr for Tier {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_uppercase().as_str() {
            "L1" => Ok(Tier::L1),
            "L2" => Ok(Tier::L2),
            "L3" => Ok(Tier::L3),
            other => Err(format!("unknown tier `{other}`")),
        }
    }
}

/// Keys shared by every tier; used for P1/P2 filtering and leakage checks.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RetrievalKeys {
    pub project: String,
    pub cwe: String,
    pub language: String,
    pub instance_id: String,
    pub description: String,
}

fn cwe_pattern() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"^CWE-[0-9]+$").unwrap())
}

impl RetrievalKeys {
    pub fn validate(&self) -> Result<(), MemoryError> {
        if self.instance_id.trim().is_empty() {
            return Err(MemoryError::InvariantViolation("instance_id is empty".into()));
        }
        if self.cwe != UNKNOWN_CWE && !cwe_pattern().is_match(&self.cwe) {
            return Err(MemoryError::InvariantViolation(format!(
                "cwe `{}` is neither CWE-<digits> nor {UNKNOWN_CWE}",
                self.cwe
            )));
        }
        Ok(())
    }

    pub fn timestamp(&self) -> Option<CveTimestamp> {
        parse_timestamp(&self.instance_id)
    }
}

/// Normalizes free-form CWE strings (`cwe-787`, `787`, ``) into the
/// canonical `CWE-<digits>` form or [`UNKNOWN_CWE`].
pub fn normalize_cwe(raw: &str) -> String {
    let t = raw.trim();
    let digits = t
        .strip_prefix("CWE-")
        .or_else(|| t.strip_prefix("cwe-"))
        .or_else(|| t.strip_prefix("Cwe-"))
        .unwrap_or(t);
    if !digits.is_empty() && digits.bytes().all(|b| b.is_ascii_digit()) {
        format!("CWE-{digits}")
    } else {
        UNKNOWN_CWE.to_string()
    }
}

/// Year and sequence number of a CVE identifier, ordered chronologically.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CveTimestamp {
    pub year: u32,
    pub sequence: u64,
}

fn cve_pattern() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?i)cve-([0-9]{4})-([0-9]{4,})").unwrap())
}

/// Extracts the first `cve-YYYY-NNNN` segment of an instance id.
pub fn parse_timestamp(instance_id: &str) -> Option<CveTimestamp> {
    let caps = cve_pattern().captures(instance_id)?;
    Some(CveTimestamp {
        year: caps[1].parse().ok()?,
        sequence: caps[2].parse().ok()?,
    })
}

/// Total time key used by the temporal filter.
///
/// Entries without a CVE id sort after every real CVE, in ingestion order.
/// A query without a CVE id is `Unbounded`, i.e. later than everything.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum EntryTime {
    Cve(CveTimestamp),
    Ingested(u64),
    Unbounded,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct L1Entry {
    pub keys: RetrievalKeys,
    pub fix_patch: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct L2Entry {
    pub keys: RetrievalKeys,
    pub fix_patch: String,
    pub rationale: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct L3Entry {
    pub keys: RetrievalKeys,
    pub fail_patch: String,
    pub correction_delta: String,
    pub transition_insight: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum MemoryEntry {
    L1(L1Entry),
    L2(L2Entry),
    L3(L3Entry),
}

impl MemoryEntry {
    pub fn tier(&self) -> Tier {
        match self {
            MemoryEntry::L1(_) => Tier::L1,
            MemoryEntry::L2(_) => Tier::L2,
            MemoryEntry::L3(_) => Tier::L3,
        }
    }

    pub fn keys(&self) -> &RetrievalKeys {
        match self {
            MemoryEntry::L1(e) => &e.keys,
            MemoryEntry::L2(e) => &e.keys,
            MemoryEntry::L3(e) => &e.keys,
        }
    }

    pub fn id(&self) -> EntryId {
        EntryId {
            tier: self.tier(),
            instance_id: self.keys().instance_id.clone(),
        }
    }

    /// The patch compared during deduplication and, for L3, during
    /// failed-patch retrieval.
    pub fn primary_patch(&self) -> &str {
        match self {
            MemoryEntry::L1(e) => &e.fix_patch,
            MemoryEntry::L2(e) => &e.fix_patch,
            MemoryEntry::L3(e) => &e.fail_patch,
        }
    }

    pub fn validate(&self) -> Result<(), MemoryError> {
        self.keys().validate()?;
        let check_diff = |name: &str, text: &str| {
            if text.trim().is_empty() {
                return Err(MemoryError::InvariantViolation(format!("{name} is empty")));
            }
            diff::parse(text).map(|_| ()).map_err(|e| {
                MemoryError::InvariantViolation(format!("{name} is not a unified diff ({e})"))
            })
        };
        match self {
            MemoryEntry::L1(e) => check_diff("fix_patch", &e.fix_patch),
            MemoryEntry::L2(e) => {
                check_diff("fix_patch", &e.fix_patch)?;
                if e.rationale.trim().is_empty() {
                    return Err(MemoryError::InvariantViolation("rationale is empty".into()));
                }
                Ok(())
            }
            MemoryEntry::L3(e) => {
                check_diff("fail_patch", &e.fail_patch)?;
                check_diff("correction_delta", &e.correction_delta)?;
                if e.fail_patch == e.correction_delta {
                    return Err(MemoryError::InvariantViolation(
                        "fail_patch equals correction_delta".into(),
                    ));
                }
                Ok(())
            }
        }
    }
}
