//! Builds a small three-tier store, shows dedup merging, idle ages and
//! pruning, and round-trips it through a JSONL file.

use avr_core::memory::{self, InsertOutcome, L1Entry, L2Entry, L3Entry, MemoryEntry, MemoryStore, RetrievalKeys, Tier};
use avr_core::retrieval::embed::DeterministicEmbedder;

fn keys(id: &str, desc: &str) -> RetrievalKeys {
    RetrievalKeys {
        project: "libdemo".into(),
        cwe: "CWE-787".into(),
        language: "c".into(),
        instance_id: id.into(),
        description: desc.into(),
    }
}

const FIX: &str = "--- a/buf.c\n+++ b/buf.c\n@@ -10,1 +10,2 @@\n char *p = malloc(n);\n+if (!p) return -1;\n";
const BAD: &str = "--- a/buf.c\n+++ b/buf.c\n@@ -10,1 +10,2 @@\n char *p = malloc(n);\n+n = n + 1;\n";

fn main() -> anyhow::Result<()> {
    let emb = DeterministicEmbedder::default();
    let mut store = MemoryStore::new();

    let l1 = MemoryEntry::L1(L1Entry {
        keys: keys("libdemo.cve-2021-0100", "out of bounds write in buffer resize"),
        fix_patch: FIX.into(),
    });
    println!("insert L1: {:?}", store.insert(l1.clone(), &emb)?);

    // Same instance id again: merged, not duplicated.
    match store.insert(l1, &emb)? {
        InsertOutcome::Merged { kept } => println!("re-insert merged into {kept:?}"),
        InsertOutcome::Inserted => println!("re-insert unexpectedly inserted"),
    }

    store.insert(
        MemoryEntry::L2(L2Entry {
            keys: keys("libdemo.cve-2022-0200", "heap overflow when resizing a buffer"),
            fix_patch: FIX.into(),
            rationale: "the allocation result was used unchecked".into(),
        }),
        &emb,
    )?;
    store.insert(
        MemoryEntry::L3(L3Entry {
            keys: keys("libdemo.cve-2022-0200", "heap overflow when resizing a buffer"),
            fail_patch: BAD.into(),
            correction_delta: FIX.into(),
            transition_insight: "growing the length hides the overflow without bounding it".into(),
        }),
        &emb,
    )?;
    for tier in Tier::ALL {
        println!("{tier}: {} entries", store.count(tier));
    }

    for _ in 0..3 {
        store.complete_task();
    }
    for e in store.entries() {
        println!("{} {} idle for {:?} tasks", e.tier(), e.keys().instance_id, store.idle_tasks(&e.id()));
    }

    let dir = tempfile::tempdir()?;
    let path = dir.path().join("memory.jsonl");
    memory::save(&store, &path)?;
    let mut back = memory::load(&path)?;
    println!("reloaded {} entries from {}", back.len(), path.display());

    let removed = back.prune(2);
    println!("prune(window = 2) removed {removed}; L1 kept: {}", back.count(Tier::L1));
    Ok(())
}
