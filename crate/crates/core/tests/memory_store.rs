mod common;

use proptest::prelude::*;

use avr_core::memory::{
    self, InsertOutcome, L1Entry, L2Entry, L3Entry, MemoryEntry, MemoryStore, RetrievalKeys, Tier,
};
use avr_core::retrieval::embed::DeterministicEmbedder;

use common::diff_adding;

fn keys(project: &str, id: &str, desc: &str) -> RetrievalKeys {
    RetrievalKeys {
        project: project.into(),
        cwe: "CWE-787".into(),
        language: "c".into(),
        instance_id: id.into(),
        description: desc.into(),
    }
}

fn entry(tier: u8, n: u32, words: &[String]) -> MemoryEntry {
    let id = format!("p.cve-2020-{:04}", 1000 + n);
    let desc = format!("{} item{n}", words.join(" "));
    let patch = diff_adding("a.c", &[format!("guard{n}();")]);
    match tier {
        0 => MemoryEntry::L1(L1Entry { keys: keys("p", &id, &desc), fix_patch: patch }),
        1 => MemoryEntry::L2(L2Entry {
            keys: keys("p", &id, &desc),
            fix_patch: patch,
            rationale: format!("reason {n}"),
        }),
        _ => MemoryEntry::L3(L3Entry {
            keys: keys("p", &id, &desc),
            correction_delta: diff_adding("a.c", &[format!("guard{n}();"), "clamp();".into()]),
            fail_patch: patch,
            transition_insight: format!("insight {n}"),
        }),
    }
}

fn word() -> impl Strategy<Value = String> {
    "[a-z]{3,8}"
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn save_load_keeps_entries_and_idle_ages(
        specs in proptest::collection::vec((0u8..3, 0u32..200, proptest::collection::vec(word(), 1..4)), 0..25),
        tasks in 0u64..6,
    ) {
        let emb = DeterministicEmbedder::default();
        let mut store = MemoryStore::new();
        for (tier, n, words) in &specs {
            store.insert(entry(*tier, *n, words), &emb).unwrap();
            if n % 3 == 0 {
                store.complete_task();
            }
        }
        for _ in 0..tasks {
            store.complete_task();
        }
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.jsonl");
        memory::save(&store, &path).unwrap();
        let back = memory::load(&path).unwrap();

        for tier in Tier::ALL {
            let a: Vec<_> = store.tier(tier).iter().map(|s| s.entry.clone()).collect();
            let b: Vec<_> = back.tier(tier).iter().map(|s| s.entry.clone()).collect();
            prop_assert_eq!(a, b);
        }
        for e in store.entries() {
            prop_assert_eq!(store.idle_tasks(&e.id()), back.idle_tasks(&e.id()));
        }
    }

    #[test]
    fn prune_spares_l1_and_recent_entries(
        specs in proptest::collection::vec((0u8..3, 0u32..200), 1..30),
        gap in 0u64..8,
        window in 1u64..6,
    ) {
        let emb = DeterministicEmbedder::default();
        let mut store = MemoryStore::new();
        for (tier, n) in &specs {
            store.insert(entry(*tier, *n, &["w".to_string()]), &emb).unwrap();
        }
        for _ in 0..gap {
            store.complete_task();
        }
        let l1 = store.count(Tier::L1);
        let before = store.len();
        let removed = store.prune(window);
        prop_assert_eq!(store.count(Tier::L1), l1);
        prop_assert_eq!(before - removed, store.len());
        if gap <= window {
            prop_assert_eq!(removed, 0);
        } else {
            prop_assert_eq!(store.count(Tier::L2) + store.count(Tier::L3), 0);
        }
    }

    #[test]
    fn reinserting_an_entry_merges(tier in 0u8..3, n in 0u32..500, words in proptest::collection::vec(word(), 1..5)) {
        let emb = DeterministicEmbedder::default();
        let mut store = MemoryStore::new();
        let e = entry(tier, n, &words);
        prop_assert_eq!(store.insert(e.clone(), &emb).unwrap(), InsertOutcome::Inserted);
        let again = store.insert(e.clone(), &emb).unwrap();
        prop_assert!(matches!(again, InsertOutcome::Merged { .. }), "merge expected");
        prop_assert_eq!(store.len(), 1);
    }
}

#[test]
fn retrieval_refreshes_idle_age() {
    let emb = DeterministicEmbedder::default();
    let mut store = MemoryStore::new();
    let e = entry(1, 7, &["copy".into()]);
    store.insert(e.clone(), &emb).unwrap();
    for _ in 0..4 {
        store.complete_task();
    }
    assert_eq!(store.idle_tasks(&e.id()), Some(4));
    store.mark_retrieved([&e.id()]);
    assert_eq!(store.idle_tasks(&e.id()), Some(0));
    store.complete_task();
    assert_eq!(store.prune(3), 0);
}

#[test]
fn corrupt_lines_are_reported_with_line_numbers() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.jsonl");
    let emb = DeterministicEmbedder::default();
    let mut store = MemoryStore::new();
    store.insert(entry(0, 1, &["a".into()]), &emb).unwrap();
    memory::save(&store, &path).unwrap();
    let mut text = std::fs::read_to_string(&path).unwrap();
    text.push_str("{\"tier\":\"L2\"}\n");
    std::fs::write(&path, text).unwrap();
    let err = memory::load(&path).unwrap_err().to_string();
    assert!(err.contains("line 2"), "{err}");
}
