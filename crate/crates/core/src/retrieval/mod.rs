//! Two-tier priority retrieval over the memory store.
//!
//! P1 candidates share project, CWE and language with the query and must
//! predate it. When fewer than `k_min` P1 candidates survive filtering, P2
//! candidates (other projects, same CWE and language) are added. Candidates
//! with the query's instance id are never returned.

pub mod embed;

use std::cmp::Ordering;

use crate::memory::{EntryTime, MemoryEntry, MemoryStore, RetrievalKeys, StoredEntry, Tier};
use embed::{cosine, embed_or_zero, jaccard, Embedder};

pub const DEFAULT_K_MIN: usize = 2;
pub const DEFAULT_TOP_N: usize = 4;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Query {
    pub keys: RetrievalKeys,
    /// P2 is consulted when fewer than this many P1 candidates survive.
    pub k_min: usize,
    pub top_n: usize,
}

impl Query {
    pub fn new(keys: RetrievalKeys) -> Self {
        Self {
            keys,
            k_min: DEFAULT_K_MIN,
            top_n: DEFAULT_TOP_N,
        }
    }

    pub fn with_limits(mut self, k_min: usize, top_n: usize) -> Self {
        self.k_min = k_min;
        self.top_n = top_n;
        self
    }

    pub fn time(&self) -> EntryTime {
        match self.keys.timestamp() {
            Some(ts) => EntryTime::Cve(ts),
            None => EntryTime::Unbounded,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, serde::Serialize)]
pub enum Priority {
    P1,
    P2,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankedEntry {
    pub entry: MemoryEntry,
    pub similarity: f64,
    pub priority: Priority,
    pub time: EntryTime,
}

/// Sort order of the result list: P1 before P2, then higher similarity,
/// newer entries, and finally instance id.
pub fn rank_order(a: &RankedEntry, b: &RankedEntry) -> Ordering {
    a.priority
        .cmp(&b.priority)
        .then_with(|| b.similarity.total_cmp(&a.similarity))
        .then_with(|| b.time.cmp(&a.time))
        .then_with(|| a.entry.keys().instance_id.cmp(&b.entry.keys().instance_id))
}

fn candidate_text<'a>(stored: &'a StoredEntry, use_patch: bool) -> &'a str {
    if use_patch {
        stored.entry.primary_patch()
    } else {
        &stored.keys().description
    }
}

/// Ranks `tier` entries of `store` for `query`.
///
/// With `query_text_override` (L3 refinement retrieval) the override text is
/// compared against stored failed patches; otherwise the query description
/// is compared against stored descriptions.
pub fn retrieve(
    store: &MemoryStore,
    tier: Tier,
    query: &Query,
    query_text_override: Option<&str>,
    embedder: &dyn Embedder,
) -> Vec<RankedEntry> {
    let k_min = query.k_min.max(1);
    let top_n = query.top_n.max(k_min);
    let q = &query.keys;
    let q_time = query.time();

    let mut p1 = Vec::new();
    let mut p2 = Vec::new();
    for stored in store.tier(tier) {
        let k = stored.keys();
        if k.instance_id == q.instance_id || k.cwe != q.cwe || k.language != q.language {
            continue;
        }
        if k.project == q.project {
            if stored.time() < q_time {
                p1.push(stored);
            }
        } else {
            p2.push(stored);
        }
    }
    let mut pool: Vec<(&StoredEntry, Priority)> = p1.iter().map(|s| (*s, Priority::P1)).collect();
    if p1.len() < k_min {
        pool.extend(p2.iter().map(|s| (*s, Priority::P2)));
    }
    if pool.is_empty() {
        return Vec::new();
    }

    let use_patch = tier == Tier::L3 && query_text_override.is_some();
    let q_text = query_text_override.unwrap_or(&q.description);
    let scores = score_all(embedder, q_text, pool.iter().map(|(s, _)| candidate_text(s, use_patch)));

    let mut ranked: Vec<RankedEntry> = pool
        .into_iter()
        .zip(scores)
        .map(|((stored, priority), similarity)| RankedEntry {
            entry: stored.entry.clone(),
            similarity,
            priority,
            time: stored.time(),
        })
        .collect();
    ranked.sort_by(rank_order);
    ranked.truncate(top_n);
    ranked
}

/// Cosine scores for every candidate, or Jaccard scores for all of them if
/// any embedding call fails, so one ranking never mixes the two scales.
fn score_all<'a>(
    embedder: &dyn Embedder,
    query: &str,
    candidates: impl Iterator<Item = &'a str>,
) -> Vec<f64> {
    let texts: Vec<&str> = candidates.collect();
    let dense = (|| {
        let qv = embed_or_zero(embedder, query)?;
        texts
            .iter()
            .map(|t| embed_or_zero(embedder, t).map(|v| cosine(&qv, &v)))
            .collect::<Result<Vec<f64>, _>>()
    })();
    match dense {
        Ok(scores) => scores,
        Err(err) => {
            log::warn!("embedding unavailable ({err}); falling back to token overlap");
            texts.iter().map(|t| jaccard(query, t)).collect()
        }
    }
}
