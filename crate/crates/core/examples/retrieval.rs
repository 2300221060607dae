//! Two-tier retrieval: same-project entries that predate the query come
//! first; other projects fill in when there are too few of them.

use avr_core::memory::{L1Entry, MemoryEntry, MemoryStore, RetrievalKeys, Tier};
use avr_core::retrieval::embed::DeterministicEmbedder;
use avr_core::retrieval::{retrieve, Query};

fn entry(project: &str, id: &str, desc: &str) -> MemoryEntry {
    MemoryEntry::L1(L1Entry {
        keys: RetrievalKeys {
            project: project.into(),
            cwe: "CWE-122".into(),
            language: "c".into(),
            instance_id: id.into(),
            description: desc.into(),
        },
        fix_patch: format!("--- a/x.c\n+++ b/x.c\n@@ -1,1 +1,1 @@\n-old\n+{id}\n"),
    })
}

fn main() -> anyhow::Result<()> {
    let emb = DeterministicEmbedder::default();
    let mut store = MemoryStore::new();
    for (project, id, desc) in [
        ("safecopy", "safecopy.cve-2022-1001", "heap overflow in safe_copy length check"),
        ("safecopy", "safecopy.cve-2026-1002", "heap overflow in a later release"),
        ("libpng", "libpng.cve-2021-2001", "heap buffer overflow when copying row data"),
        ("openjpeg", "openjpeg.cve-2020-3001", "tile decoder writes past the heap buffer"),
    ] {
        store.insert(entry(project, id, desc), &emb)?;
    }

    let query = Query::new(RetrievalKeys {
        project: "safecopy".into(),
        cwe: "CWE-122".into(),
        language: "c".into(),
        instance_id: "safecopy.cve-2024-0001".into(),
        description: "heap buffer overflow in safe_copy: length is not checked".into(),
    });
    println!("query time: {:?}", query.time());
    for r in retrieve(&store, Tier::L1, &query, None, &emb) {
        println!(
            "{:?} {:.3} {:<24} {:?}",
            r.priority,
            r.similarity,
            r.entry.keys().instance_id,
            r.time
        );
    }
    Ok(())
}
