//! Deterministic prompt assembly for the three phases.

use std::fmt::Write as _;

use super::{ChatTurn, PromptPhase};
use crate::localizer::LocalizationObject;
use crate::memory::{MemoryEntry, RetrievalKeys, Tier};
use crate::retrieval::RankedEntry;
use crate::workspace::{truncate_middle, CompressedContext};

pub const DEFAULT_PROMPT_BUDGET: usize = 24_000;

const LOCATOR: &str = include_str!("../../prompts/locator.txt");
const PATCHER: &str = include_str!("../../prompts/patcher.txt");
const VERIFIER: &str = include_str!("../../prompts/verifier.txt");

pub fn system_prompt(phase: PromptPhase) -> &'static str {
    match phase {
        PromptPhase::Locator => LOCATOR,
        PromptPhase::Patcher => PATCHER,
        PromptPhase::Verifier => VERIFIER,
    }
}

#[derive(Debug, Clone, Copy)]
pub struct PromptInput<'a> {
    pub phase: PromptPhase,
    pub keys: &'a RetrievalKeys,
    pub attempt: u32,
    pub crash_log: Option<&'a str>,
    pub localization: Option<&'a LocalizationObject>,
    /// Verifier only: the accepted patch to explain.
    pub accepted_patch: Option<&'a str>,
    /// Verifier only: the last failed candidate, if any.
    pub failed_patch: Option<&'a str>,
    /// In rank order.
    pub memories: &'a [RankedEntry],
    pub compressed: Option<&'a CompressedContext>,
    pub budget: usize,
}

impl<'a> PromptInput<'a> {
    pub fn new(phase: PromptPhase, keys: &'a RetrievalKeys, attempt: u32) -> Self {
        Self {
            phase,
            keys,
            attempt,
            crash_log: None,
            localization: None,
            accepted_patch: None,
            failed_patch: None,
            memories: &[],
            compressed: None,
            budget: DEFAULT_PROMPT_BUDGET,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RenderedPrompt {
    /// System turn followed by user turn.
    pub turns: Vec<ChatTurn>,
    /// How many of the eligible memories fit the budget (a prefix of the
    /// ranked list).
    pub memories_included: usize,
}

impl RenderedPrompt {
    pub fn size(&self) -> usize {
        self.turns.iter().map(|t| t.content.chars().count()).sum()
    }

    pub fn user_text(&self) -> &str {
        &self.turns[1].content
    }
}

fn fence(out: &mut String, lang: &str, body: &str) {
    let _ = writeln!(out, "```{lang}");
    out.push_str(body);
    if !body.ends_with('\n') {
        out.push('\n');
    }
    out.push_str("```\n");
}

fn render_memory(out: &mut String, n: usize, m: &RankedEntry) {
    let k = m.entry.keys();
    let _ = writeln!(
        out,
        "### Memory {n} [{} {:?} similarity {:.3}]",
        m.entry.tier(),
        m.priority,
        m.similarity
    );
    let _ = writeln!(out, "Project: {} | {} | {} | {}", k.project, k.cwe, k.language, k.instance_id);
    let _ = writeln!(out, "Description: {}", k.description.trim());
    match &m.entry {
        MemoryEntry::L1(e) => {
            out.push_str("Fix patch:\n");
            fence(out, "diff", &e.fix_patch);
        }
        MemoryEntry::L2(e) => {
            let _ = writeln!(out, "Why it worked: {}", e.rationale.trim());
            out.push_str("Fix patch:\n");
            fence(out, "diff", &e.fix_patch);
        }
        MemoryEntry::L3(e) => {
            out.push_str("Failed patch:\n");
            fence(out, "diff", &e.fail_patch);
            out.push_str("Correction that made it succeed:\n");
            fence(out, "diff", &e.correction_delta);
            let _ = writeln!(out, "Lesson: {}", e.transition_insight.trim());
        }
    }
}

fn eligible(input: &PromptInput<'_>, m: &RankedEntry) -> bool {
    match m.entry.tier() {
        Tier::L3 => input.phase == PromptPhase::Patcher && input.attempt > 1,
        _ => true,
    }
}

fn user_text(input: &PromptInput<'_>, memories: &[&RankedEntry]) -> String {
    let k = input.keys;
    let mut out = String::new();
    out.push_str("## Task\n");
    let _ = writeln!(out, "Project: {}", k.project);
    let _ = writeln!(out, "Weakness: {}", k.cwe);
    let _ = writeln!(out, "Language: {}", k.language);
    let _ = writeln!(out, "Instance: {}", k.instance_id);
    let _ = writeln!(out, "Attempt: {}", input.attempt);
    out.push_str("\n## Vulnerability description\n");
    out.push_str(k.description.trim());
    out.push('\n');
    if let Some(log) = input.crash_log.filter(|l| !l.trim().is_empty()) {
        out.push_str("\n## Crash report\n");
        fence(&mut out, "", &truncate_middle(log.trim_end(), input.budget / 4));
    }
    if let Some(loc) = input.localization {
        out.push_str("\n## Repair target\n");
        let _ = writeln!(out, "{}:{}-{}", loc.file, loc.line_start, loc.line_end);
        if !loc.reason.trim().is_empty() {
            let _ = writeln!(out, "Reason: {}", loc.reason.trim());
        }
    }
    if let Some(p) = input.failed_patch {
        out.push_str("\n## Failed attempt\n");
        fence(&mut out, "diff", p);
    }
    if let Some(p) = input.accepted_patch {
        out.push_str("\n## Accepted patch\n");
        fence(&mut out, "diff", p);
    }
    if !memories.is_empty() {
        out.push_str("\n## Retrieved memories\n");
        for (i, m) in memories.iter().enumerate() {
            render_memory(&mut out, i + 1, m);
        }
    }
    if let Some(c) = input.compressed.filter(|c| !c.is_empty()) {
        out.push_str("\n## Previous attempt summary\n");
        out.push_str(&c.render());
    }
    out
}

/// Assembles the system and user turns. Memories are rendered in rank
/// order; while the prompt exceeds the budget the lowest-ranked memory is
/// dropped. If it still does not fit with no memories, the user text is
/// truncated in the middle.
pub fn render_prompt(input: &PromptInput<'_>) -> RenderedPrompt {
    let system = system_prompt(input.phase);
    let sys_len = system.chars().count();
    let memories: Vec<&RankedEntry> = input.memories.iter().filter(|m| eligible(input, m)).collect();
    let mut n = memories.len();
    loop {
        let user = user_text(input, &memories[..n]);
        let fits = sys_len + user.chars().count() <= input.budget;
        if fits || n == 0 {
            let user = if fits {
                user
            } else {
                truncate_middle(&user, input.budget.saturating_sub(sys_len))
            };
            return RenderedPrompt {
                turns: vec![ChatTurn::system(system), ChatTurn::user(user)],
                memories_included: n,
            };
        }
        n -= 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::memory::{EntryTime, L1Entry, L2Entry, L3Entry};
    use crate::retrieval::Priority;

    fn keys(id: &str) -> RetrievalKeys {
        RetrievalKeys {
            project: "demo".into(),
            cwe: "CWE-787".into(),
            language: "c".into(),
            instance_id: id.into(),
            description: format!("overflow {id}"),
        }
    }

    const PATCH: &str = "--- a/x.c\n+++ b/x.c\n@@ -1 +1 @@\n-a\n+b\n";

    fn ranked(entry: MemoryEntry, sim: f64) -> RankedEntry {
        RankedEntry {
            entry,
            similarity: sim,
            priority: Priority::P1,
            time: EntryTime::Unbounded,
        }
    }

    fn l1(id: &str, sim: f64) -> RankedEntry {
        ranked(MemoryEntry::L1(L1Entry { keys: keys(id), fix_patch: PATCH.into() }), sim)
    }

    #[test]
    fn base_prompt_only() {
        let k = keys("demo.cve-2024-1");
        let p = render_prompt(&PromptInput::new(PromptPhase::Locator, &k, 1));
        assert_eq!(p.turns[0].content, LOCATOR);
        assert!(!p.user_text().contains("Retrieved memories"));
        assert!(!p.user_text().contains("Previous attempt"));
        assert_eq!(p.memories_included, 0);
    }

    #[test]
    fn memories_in_rank_order() {
        let k = keys("demo.cve-2024-9");
        let mems = vec![
            l1("demo.cve-2020-1", 0.9),
            ranked(
                MemoryEntry::L2(L2Entry { keys: keys("demo.cve-2021-2"), fix_patch: PATCH.into(), rationale: "bounds".into() }),
                0.8,
            ),
            l1("demo.cve-2019-3", 0.7),
        ];
        let input = PromptInput { memories: &mems, ..PromptInput::new(PromptPhase::Patcher, &k, 1) };
        let p = render_prompt(&input);
        let t = p.user_text();
        let a = t.find("demo.cve-2020-1").unwrap();
        let b = t.find("demo.cve-2021-2").unwrap();
        let c = t.find("demo.cve-2019-3").unwrap();
        assert!(a < b && b < c);
        assert!(t.contains("Why it worked: bounds"));
        assert_eq!(render_prompt(&input), p);
    }

    #[test]
    fn l3_only_after_first_attempt_in_patcher() {
        let k = keys("demo.cve-2024-9");
        let l3 = ranked(
            MemoryEntry::L3(L3Entry {
                keys: keys("demo.cve-2022-5"),
                fail_patch: PATCH.into(),
                correction_delta: "--- a/x.c\n+++ b/x.c\n@@ -1 +1 @@\n-b\n+c\n".into(),
                transition_insight: "check before copy".into(),
            }),
            0.9,
        );
        let mems = vec![l3];
        for (phase, attempt, shown) in [
            (PromptPhase::Patcher, 1, false),
            (PromptPhase::Patcher, 2, true),
            (PromptPhase::Locator, 2, false),
        ] {
            let p = render_prompt(&PromptInput { memories: &mems, ..PromptInput::new(phase, &k, attempt) });
            assert_eq!(p.user_text().contains("check before copy"), shown, "{phase} {attempt}");
        }
    }

    #[test]
    fn drops_lowest_ranked_first() {
        let k = keys("demo.cve-2024-9");
        let mems: Vec<RankedEntry> = (0..4).map(|i| l1(&format!("demo.cve-2020-{i}"), 0.9 - i as f64 / 10.0)).collect();
        let full = render_prompt(&PromptInput { memories: &mems, ..PromptInput::new(PromptPhase::Patcher, &k, 1) });
        assert_eq!(full.memories_included, 4);
        let budget = full.size() - 1;
        let p = render_prompt(&PromptInput { memories: &mems, budget, ..PromptInput::new(PromptPhase::Patcher, &k, 1) });
        assert_eq!(p.memories_included, 3);
        assert!(p.size() <= budget);
        assert!(!p.user_text().contains("demo.cve-2020-3"));
        assert!(p.user_text().contains("demo.cve-2020-2"));
    }

    #[test]
    fn compressed_context_appended() {
        let k = keys("demo.cve-2024-9");
        let c = CompressedContext {
            visited: vec!["utils.c:35-55".into()],
            applied_hunks: vec![],
            failure_log: "FAIL: test_copy".into(),
        };
        let p = render_prompt(&PromptInput { compressed: Some(&c), ..PromptInput::new(PromptPhase::Patcher, &k, 2) });
        assert!(p.user_text().contains("(i) Visited files/line ranges:\n  - utils.c:35-55"));
        assert!(p.user_text().contains("FAIL: test_copy"));
    }

    #[test]
    fn tiny_budget_still_bounded() {
        let k = keys("demo.cve-2024-9");
        let p = render_prompt(&PromptInput { budget: LOCATOR.chars().count() + 100, ..PromptInput::new(PromptPhase::Locator, &k, 1) });
        assert!(p.size() <= LOCATOR.chars().count() + 100);
    }
}
