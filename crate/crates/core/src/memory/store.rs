use std::collections::HashMap;
use std::sync::{Arc, RwLock};

use super::{EntryTime, MemoryEntry, MemoryError, RetrievalKeys, Tier};
use crate::retrieval::embed::{cosine, embed_or_zero, jaccard, Embedder, Embedding};

pub const DEFAULT_DEDUP_THRESHOLD: f64 = 0.95;

/// Concurrent sessions read through the lock; inserts and prunes take the
/// single write guard.
pub type SharedMemory = Arc<RwLock<MemoryStore>>;

/// Identity of an entry: instance ids are unique within a tier.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct EntryId {
    pub tier: Tier,
    pub instance_id: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum InsertOutcome {
    Inserted,
    /// The entry duplicated `kept`, which stays in the store with its
    /// recency refreshed.
    Merged { kept: EntryId },
}

#[derive(Debug, Clone)]
pub struct StoredEntry {
    pub entry: MemoryEntry,
    /// Ingestion order; the fallback timestamp for ids without a CVE.
    pub seq: u64,
    vectors: Option<(Embedding, Embedding)>,
}

impl StoredEntry {
    pub fn time(&self) -> EntryTime {
        match self.entry.keys().timestamp() {
            Some(ts) => EntryTime::Cve(ts),
            None => EntryTime::Ingested(self.seq),
        }
    }

    pub fn keys(&self) -> &RetrievalKeys {
        self.entry.keys()
    }
}

impl PartialEq for StoredEntry {
    fn eq(&self, other: &Self) -> bool {
        self.entry == other.entry && self.seq == other.seq
    }
}

#[derive(Debug, Clone)]
pub struct MemoryStore {
    tiers: [Vec<StoredEntry>; 3],
    /// Task clock value at which each entry was last retrieved (or inserted).
    retrieval_log: HashMap<EntryId, u64>,
    completed_tasks: u64,
    next_seq: u64,
    dedup_threshold: f64,
}

impl Default for MemoryStore {
    fn default() -> Self {
        Self::new()
    }
}

impl MemoryStore {
    pub fn new() -> Self {
        Self {
            tiers: Default::default(),
            retrieval_log: HashMap::new(),
            completed_tasks: 0,
            next_seq: 0,
            dedup_threshold: DEFAULT_DEDUP_THRESHOLD,
        }
    }

    pub fn with_dedup_threshold(mut self, threshold: f64) -> Self {
        self.dedup_threshold = threshold;
        self
    }

    pub fn dedup_threshold(&self) -> f64 {
        self.dedup_threshold
    }

    pub fn into_shared(self) -> SharedMemory {
        Arc::new(RwLock::new(self))
    }

    pub fn tier(&self, tier: Tier) -> &[StoredEntry] {
        &self.tiers[tier.index()]
    }

    pub fn entries(&self) -> impl Iterator<Item = &MemoryEntry> {
        self.tiers.iter().flatten().map(|s| &s.entry)
    }

    pub fn len(&self) -> usize {
        self.tiers.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn count(&self, tier: Tier) -> usize {
        self.tiers[tier.index()].len()
    }

    pub fn get(&self, id: &EntryId) -> Option<&MemoryEntry> {
        self.tiers[id.tier.index()]
            .iter()
            .find(|s| s.entry.keys().instance_id == id.instance_id)
            .map(|s| &s.entry)
    }

    pub fn completed_tasks(&self) -> u64 {
        self.completed_tasks
    }

    /// Advances the task clock; called once per finished repair session.
    pub fn complete_task(&mut self) {
        self.completed_tasks += 1;
    }

    pub fn last_used(&self, id: &EntryId) -> Option<u64> {
        self.retrieval_log.get(id).copied()
    }

    /// Number of completed tasks since the entry was last retrieved.
    pub fn idle_tasks(&self, id: &EntryId) -> Option<u64> {
        self.last_used(id).map(|t| self.completed_tasks.saturating_sub(t))
    }

    pub fn mark_retrieved<'a>(&mut self, ids: impl IntoIterator<Item = &'a EntryId>) {
        for id in ids {
            if let Some(slot) = self.retrieval_log.get_mut(id) {
                *slot = self.completed_tasks;
            }
        }
    }

    fn vectors<'s>(
        stored: &'s mut StoredEntry,
        embedder: &dyn Embedder,
    ) -> Option<&'s (Embedding, Embedding)> {
        if stored.vectors.is_none() {
            let d = embed_or_zero(embedder, &stored.entry.keys().description).ok()?;
            let p = embed_or_zero(embedder, stored.entry.primary_patch()).ok()?;
            stored.vectors = Some((d, p));
        }
        stored.vectors.as_ref()
    }

    /// Inserts `entry`, merging it into an existing same-tier entry when
    /// both the description and the patch similarities exceed the dedup
    /// threshold, or when the instance id is already present in the tier.
    pub fn insert(
        &mut self,
        entry: MemoryEntry,
        embedder: &dyn Embedder,
    ) -> Result<InsertOutcome, MemoryError> {
        entry.validate()?;
        let tier = entry.tier();
        let desc = &entry.keys().description;
        let patch = entry.primary_patch();

        let new_vectors = match (embed_or_zero(embedder, desc), embed_or_zero(embedder, patch)) {
            (Ok(d), Ok(p)) => Some((d, p)),
            _ => None,
        };
        let threshold = self.dedup_threshold;

        let mut kept = None;
        for stored in self.tiers[tier.index()].iter_mut() {
            if stored.entry.keys().instance_id == entry.keys().instance_id {
                kept = Some(stored.entry.id());
                break;
            }
            let (ds, ps) = match (&new_vectors, Self::vectors(stored, embedder)) {
                (Some((nd, np)), Some((od, op))) => (cosine(nd, od), cosine(np, op)),
                _ => (
                    jaccard(desc, &stored.entry.keys().description),
                    jaccard(patch, stored.entry.primary_patch()),
                ),
            };
            if ds > threshold && ps > threshold {
                kept = Some(stored.entry.id());
                break;
            }
        }

        if let Some(kept) = kept {
            self.retrieval_log.insert(kept.clone(), self.completed_tasks);
            return Ok(InsertOutcome::Merged { kept });
        }

        let id = entry.id();
        self.push_raw(entry, new_vectors);
        self.retrieval_log.insert(id, self.completed_tasks);
        Ok(InsertOutcome::Inserted)
    }

    fn push_raw(&mut self, entry: MemoryEntry, vectors: Option<(Embedding, Embedding)>) {
        let seq = self.next_seq;
        self.next_seq += 1;
        self.tiers[entry.tier().index()].push(StoredEntry { entry, seq, vectors });
    }

    /// Appends without dedup; used when loading a persisted store.
    pub(crate) fn restore(&mut self, entry: MemoryEntry, idle_tasks: u64) {
        let id = entry.id();
        self.push_raw(entry, None);
        self.retrieval_log.insert(id, idle_tasks);
    }

    /// Re-bases restored idle counts onto a fresh clock so that
    /// `idle_tasks` survives a save/load cycle.
    pub(crate) fn finish_restore(&mut self) {
        let clock = self.retrieval_log.values().copied().max().unwrap_or(0);
        self.completed_tasks = clock;
        for v in self.retrieval_log.values_mut() {
            *v = clock - *v;
        }
    }

    /// Removes every L2/L3 entry whose last retrieval is more than `window`
    /// completed tasks ago. L1 is never pruned.
    pub fn prune(&mut self, window: u64) -> usize {
        let window = window.max(1);
        let clock = self.completed_tasks;
        let mut removed = 0;
        for tier in [Tier::L2, Tier::L3] {
            let log = &mut self.retrieval_log;
            self.tiers[tier.index()].retain(|s| {
                let id = s.entry.id();
                let last = log.get(&id).copied().unwrap_or(0);
                let stale = clock.saturating_sub(last) > window;
                if stale {
                    log.remove(&id);
                    removed += 1;
                }
                !stale
            });
        }
        removed
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::memory::{L1Entry, L2Entry, L3Entry};
    use crate::retrieval::embed::DeterministicEmbedder;

    pub(crate) fn keys(id: &str, desc: &str) -> RetrievalKeys {
        RetrievalKeys {
            project: "proj".into(),
            cwe: "CWE-787".into(),
            language: "c".into(),
            instance_id: id.into(),
            description: desc.into(),
        }
    }

    fn patch(body: &str) -> String {
        format!("--- a/f.c\n+++ b/f.c\n@@ -1,1 +1,1 @@\n-old\n+{body}\n")
    }

    fn l2(id: &str, desc: &str, body: &str) -> MemoryEntry {
        MemoryEntry::L2(L2Entry {
            keys: keys(id, desc),
            fix_patch: patch(body),
            rationale: "bounds check".into(),
        })
    }

    fn dot(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| x * y).sum()
    }

    fn hand_cosine(e: &dyn Embedder, a: &str, b: &str) -> f64 {
        let x = e.embed(a).unwrap().0;
        let y = e.embed(b).unwrap().0;
        dot(&x, &y) / (dot(&x, &x).sqrt() * dot(&y, &y).sqrt())
    }

    #[test]
    fn exact_duplicate_merges() {
        let e = DeterministicEmbedder::default();
        let mut s = MemoryStore::new();
        let a = l2("p.cve-2020-0001", "heap overflow in parser", "if (n > cap) return;");
        assert_eq!(s.insert(a.clone(), &e).unwrap(), InsertOutcome::Inserted);
        let mut dup = a.clone();
        if let MemoryEntry::L2(x) = &mut dup {
            x.keys.instance_id = "p.cve-2020-0002".into();
        }
        assert!(matches!(s.insert(dup, &e).unwrap(), InsertOutcome::Merged { .. }));
        assert_eq!(s.len(), 1);
    }

    #[test]
    fn orthogonal_entry_inserts() {
        let e = DeterministicEmbedder::default();
        let mut s = MemoryStore::new();
        s.insert(l2("p.cve-2020-0001", "heap overflow in parser", "check"), &e).unwrap();
        let out = s
            .insert(l2("p.cve-2020-0002", "use after free in gc sweep", "null out pointer"), &e)
            .unwrap();
        assert_eq!(out, InsertOutcome::Inserted);
        assert_eq!(s.count(Tier::L2), 2);
    }

    #[test]
    fn paraphrased_descriptions_merge() {
        let e = DeterministicEmbedder::default();
        let d1 = "integer overflow in png chunk length allows heap buffer overflow in read_chunk";
        let d2 = "An integer overflow in the PNG chunk length allows a heap buffer overflow via read_chunk";
        let p1 = patch("if (length > PNG_MAX) return -1;");
        let p2 = patch("if (length > PNG_MAX)  return -1;");
        let ds = hand_cosine(&e, d1, d2);
        let ps = hand_cosine(&e, &p1, &p2);
        assert!(ds > 0.95 && ps > 0.95, "oracle similarities {ds} {ps}");

        let mut s = MemoryStore::new();
        s.insert(l2("png.cve-2021-1000", d1, "if (length > PNG_MAX) return -1;"), &e).unwrap();
        let out = s
            .insert(l2("png.cve-2021-1001", d2, "if (length > PNG_MAX)  return -1;"), &e)
            .unwrap();
        assert!(matches!(out, InsertOutcome::Merged { .. }));
    }

    #[test]
    fn same_instance_id_merges_and_keeps_older() {
        let e = DeterministicEmbedder::default();
        let mut s = MemoryStore::new();
        s.insert(l2("p.cve-2020-0001", "heap overflow", "a"), &e).unwrap();
        let out = s.insert(l2("p.cve-2020-0001", "totally different text", "b"), &e).unwrap();
        assert!(matches!(out, InsertOutcome::Merged { .. }));
        assert_eq!(s.tier(Tier::L2)[0].keys().description, "heap overflow");
    }

    #[test]
    fn invalid_entry_rejected() {
        let e = DeterministicEmbedder::default();
        let mut s = MemoryStore::new();
        let bad = MemoryEntry::L1(L1Entry {
            keys: keys("p.cve-2020-0001", "d"),
            fix_patch: "not a diff".into(),
        });
        assert!(matches!(s.insert(bad, &e), Err(MemoryError::InvariantViolation(_))));
        let same = MemoryEntry::L3(L3Entry {
            keys: keys("p.cve-2020-0002", "d"),
            fail_patch: patch("x"),
            correction_delta: patch("x"),
            transition_insight: "t".into(),
        });
        assert!(s.insert(same, &e).is_err());
    }

    #[test]
    fn merge_refreshes_recency() {
        let e = DeterministicEmbedder::default();
        let mut s = MemoryStore::new();
        let a = l2("p.cve-2020-0001", "heap overflow", "a");
        s.insert(a.clone(), &e).unwrap();
        for _ in 0..10 {
            s.complete_task();
        }
        assert_eq!(s.idle_tasks(&a.id()), Some(10));
        s.insert(a.clone(), &e).unwrap();
        assert_eq!(s.idle_tasks(&a.id()), Some(0));
    }

    #[test]
    fn prune_examples() {
        let e = DeterministicEmbedder::default();
        let mut s = MemoryStore::new();
        let a = l2("p.cve-2020-0001", "heap overflow", "a");
        s.insert(a, &e).unwrap();
        for _ in 0..3 {
            s.complete_task();
        }
        assert_eq!(s.clone().prune(5), 0);
        for _ in 0..7 {
            s.complete_task();
        }
        assert_eq!(s.prune(5), 1);
        assert!(s.is_empty());
    }

    #[test]
    fn prune_never_touches_l1() {
        let e = DeterministicEmbedder::default();
        let mut s = MemoryStore::new();
        s.insert(
            MemoryEntry::L1(L1Entry {
                keys: keys("p.cve-2020-0001", "heap overflow"),
                fix_patch: patch("a"),
            }),
            &e,
        )
        .unwrap();
        for _ in 0..100 {
            s.complete_task();
        }
        assert_eq!(s.prune(1), 0);
        assert_eq!(s.count(Tier::L1), 1);
    }

    #[test]
    fn prune_matches_brute_force_on_mixed_store() {
        let e = DeterministicEmbedder::default();
        let mut s = MemoryStore::new();
        let descs = [
            "heap overflow in parser",
            "use after free in gc",
            "null dereference in decoder",
            "integer overflow in allocator",
            "format string in logger",
            "double free in cleanup",
        ];
        // Insert at clock 0..6 and retrieve some of them later.
        let mut ids = Vec::new();
        for (i, d) in descs.iter().enumerate() {
            let entry = if i % 2 == 0 {
                l2(&format!("p.cve-2020-{:04}", i + 1), d, &format!("fix {i}"))
            } else {
                MemoryEntry::L3(L3Entry {
                    keys: keys(&format!("p.cve-2020-{:04}", i + 1), d),
                    fail_patch: patch(&format!("bad {i}")),
                    correction_delta: patch(&format!("good {i}")),
                    transition_insight: "t".into(),
                })
            };
            ids.push(entry.id());
            s.insert(entry, &e).unwrap();
            s.complete_task();
        }
        for _ in 0..4 {
            s.complete_task();
        }
        s.mark_retrieved([&ids[1], &ids[4]]);
        for _ in 0..3 {
            s.complete_task();
        }
        let clock = s.completed_tasks();
        for window in 1..=14 {
            let expect: Vec<EntryId> = ids
                .iter()
                .filter(|id| clock - s.last_used(id).unwrap() > window)
                .cloned()
                .collect();
            let mut copy = s.clone();
            let removed = copy.prune(window);
            assert_eq!(removed, expect.len(), "window {window}");
            for id in &expect {
                assert!(copy.get(id).is_none());
            }
        }
    }
}
