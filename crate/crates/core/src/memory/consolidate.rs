use super::{InsertOutcome, L2Entry, L3Entry, MemoryEntry, MemoryError, MemoryStore};
use crate::agent::{Outcome, RepairSession};
use crate::diff;
use crate::retrieval::embed::Embedder;

/// Produces the natural-language parts of new L2/L3 entries. Returning
/// `None` falls back to the fixed templates.
pub trait InsightSource {
    fn rationale(&self, session: &RepairSession, accepted_patch: &str) -> Option<String>;

    fn transition_insight(
        &self,
        session: &RepairSession,
        failed_patch: &str,
        accepted_patch: &str,
        correction_delta: &str,
    ) -> Option<String>;
}

/// Deterministic templates only.
pub struct TemplateInsights;

impl InsightSource for TemplateInsights {
    fn rationale(&self, _: &RepairSession, _: &str) -> Option<String> {
        None
    }

    fn transition_insight(&self, _: &RepairSession, _: &str, _: &str, _: &str) -> Option<String> {
        None
    }
}

fn template_rationale(session: &RepairSession, accepted: &str) -> String {
    let hunks = diff::hunks(accepted);
    let added: Vec<String> = hunks.iter().flat_map(|h| h.added.clone()).collect();
    let removed: Vec<String> = hunks.iter().flat_map(|h| h.removed.clone()).collect();
    let files: Vec<String> = diff::parse(accepted)
        .map(|fs| fs.iter().map(|f| f.path().to_string()).collect())
        .unwrap_or_default();
    format!(
        "{cwe} fix in {project} ({lang}) touching {files}: added {added}, removed {removed}. \
         The PoC no longer triggers the fault and every baseline regression test still passes.",
        cwe = session.keys.cwe,
        project = session.keys.project,
        lang = session.keys.language,
        files = if files.is_empty() { "no files".to_string() } else { files.join(", ") },
        added = diff::summarize_lines(&added),
        removed = diff::summarize_lines(&removed),
    )
}

fn template_transition(delta: &str) -> String {
    let hunks = diff::hunks(delta);
    let old: Vec<String> = hunks.iter().flat_map(|h| h.removed.clone()).collect();
    let new: Vec<String> = hunks.iter().flat_map(|h| h.added.clone()).collect();
    format!(
        "replaced {} with {}",
        diff::summarize_lines(&old),
        diff::summarize_lines(&new)
    )
}

#[derive(Debug, Clone)]
pub struct Consolidation {
    pub l2: L2Entry,
    pub l2_outcome: InsertOutcome,
    pub l3: Option<L3Entry>,
    pub l3_outcome: Option<InsertOutcome>,
}

/// Turns a successful session into a new L2 entry and, when at least one
/// verification failed before success, an L3 entry recording the last
/// failed candidate and the delta that fixed it. Both go through
/// [`MemoryStore::insert`].
pub fn consolidate_success(
    store: &mut MemoryStore,
    session: &RepairSession,
    embedder: &dyn Embedder,
    insights: &dyn InsightSource,
) -> Result<Consolidation, MemoryError> {
    if !matches!(session.outcome, Some(Outcome::Success)) {
        return Err(MemoryError::InvalidSession("session did not succeed".into()));
    }
    let accepted = session
        .accepted_patch()
        .ok_or_else(|| MemoryError::InvalidSession("no accepted patch recorded".into()))?
        .to_string();

    let rationale = insights
        .rationale(session, &accepted)
        .filter(|r| !r.trim().is_empty())
        .unwrap_or_else(|| template_rationale(session, &accepted));
    let l2 = L2Entry {
        keys: session.keys.clone(),
        fix_patch: accepted.clone(),
        rationale,
    };

    let l3 = match session.last_failed() {
        Some(failed) if !failed.patch.trim().is_empty() => {
            let delta = session
                .correction_delta
                .clone()
                .filter(|d| !d.trim().is_empty())
                .unwrap_or_else(|| diff::unified(&failed.patch, &accepted, "failed.patch", "accepted.patch"));
            let insight = insights
                .transition_insight(session, &failed.patch, &accepted, &delta)
                .filter(|i| !i.trim().is_empty())
                .unwrap_or_else(|| template_transition(&delta));
            Some(L3Entry {
                keys: session.keys.clone(),
                fail_patch: failed.patch.clone(),
                correction_delta: delta,
                transition_insight: insight,
            })
        }
        _ => None,
    };

    let l2_outcome = store.insert(MemoryEntry::L2(l2.clone()), embedder)?;
    let l3_outcome = match &l3 {
        Some(e) => Some(store.insert(MemoryEntry::L3(e.clone()), embedder)?),
        None => None,
    };
    Ok(Consolidation {
        l2,
        l2_outcome,
        l3,
        l3_outcome,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agent::{Attempt, Transition};
    use crate::memory::{RetrievalKeys, Tier};
    use crate::oracle::VerificationVerdict;
    use crate::retrieval::embed::DeterministicEmbedder;

    fn patch(line: &str) -> String {
        format!(
            "diff --git a/utils.c b/utils.c\n--- a/utils.c\n+++ b/utils.c\n@@ -44,2 +44,3 @@\n     char *dst = malloc(BUF_SIZE);\n+{line}\n     memcpy(dst, src, len);\n"
        )
    }

    fn verdict(v: bool, f: bool) -> VerificationVerdict {
        VerificationVerdict {
            vuln_mitigated: v,
            functionality_preserved: f,
            build_ok: true,
            logs: String::new(),
        }
    }

    fn session(results: &[(&str, bool, bool)]) -> RepairSession {
        let mut s = RepairSession::new(RetrievalKeys {
            project: "demo".into(),
            cwe: "CWE-122".into(),
            language: "c".into(),
            instance_id: "demo.cve-2024-0001".into(),
            description: "heap overflow in safe_copy".into(),
        });
        for (i, (line, v, f)) in results.iter().enumerate() {
            let verdict = verdict(*v, *f);
            s.attempts.push(Attempt {
                number: i as u32 + 1,
                localization: None,
                patch: patch(line),
                transition: Transition::from_verdict(&verdict),
                verdict: Some(verdict),
                failure_reason: None,
            });
        }
        let last_ok = results.last().map(|r| r.1 && r.2).unwrap_or(false);
        s.outcome = Some(if last_ok {
            Outcome::Success
        } else {
            Outcome::Exhausted { reason: "cap".into() }
        });
        s
    }

    #[test]
    fn first_attempt_success_gives_l2_only() {
        let e = DeterministicEmbedder::default();
        let mut store = MemoryStore::new();
        let s = session(&[("    if (len > BUF_SIZE) len = BUF_SIZE;", true, true)]);
        let c = consolidate_success(&mut store, &s, &e, &TemplateInsights).unwrap();
        assert!(c.l3.is_none());
        assert_eq!(store.count(Tier::L2), 1);
        assert_eq!(store.count(Tier::L3), 0);
        assert!(c.l2.rationale.contains("CWE-122"));
    }

    #[test]
    fn fail_then_success_gives_l2_and_l3() {
        let e = DeterministicEmbedder::default();
        let mut store = MemoryStore::new();
        let s = session(&[
            ("    return;", true, false),
            ("    if (len > BUF_SIZE) len = BUF_SIZE;", true, true),
        ]);
        let c = consolidate_success(&mut store, &s, &e, &TemplateInsights).unwrap();
        let l3 = c.l3.unwrap();
        assert_eq!(l3.fail_patch, s.attempts[0].patch);
        assert!(!l3.correction_delta.trim().is_empty());
        assert!(diff::is_valid(&l3.correction_delta));
        assert!(l3.transition_insight.starts_with("replaced "));
        assert_eq!(store.count(Tier::L3), 1);
    }

    #[test]
    fn l3_records_last_failed_candidate() {
        let e = DeterministicEmbedder::default();
        let mut store = MemoryStore::new();
        let s = session(&[
            ("    /* first try */", false, true),
            ("    return;", true, false),
            ("    if (len > BUF_SIZE) len = BUF_SIZE;", true, true),
        ]);
        let c = consolidate_success(&mut store, &s, &e, &TemplateInsights).unwrap();
        assert_eq!(c.l3.unwrap().fail_patch, s.attempts[1].patch);
    }

    #[test]
    fn exhausted_session_is_rejected() {
        let e = DeterministicEmbedder::default();
        let mut store = MemoryStore::new();
        let s = session(&[("    return;", false, true)]);
        assert!(matches!(
            consolidate_success(&mut store, &s, &e, &TemplateInsights),
            Err(MemoryError::InvalidSession(_))
        ));
    }

    #[test]
    fn session_delta_preferred_over_text_diff() {
        let e = DeterministicEmbedder::default();
        let mut store = MemoryStore::new();
        let mut s = session(&[("    return;", true, false), ("    if (len > 8) len = 8;", true, true)]);
        let delta = "--- a/utils.c\n+++ b/utils.c\n@@ -45 +45 @@\n-    return;\n+    if (len > 8) len = 8;\n";
        s.correction_delta = Some(delta.into());
        let c = consolidate_success(&mut store, &s, &e, &TemplateInsights).unwrap();
        let l3 = c.l3.unwrap();
        assert_eq!(l3.correction_delta, delta);
        assert_eq!(l3.transition_insight, "replaced `return;` with `if (len > 8) len = 8;`");
    }
}
