//! Renders the locator and patcher prompts for the fixture task with one
//! retrieved memory, showing budget accounting.

use std::path::PathBuf;

use avr_core::agent::RepairTask;
use avr_core::gateway::{render_prompt, PromptInput};
use avr_core::gateway::PromptPhase;
use avr_core::localizer::LocalizationObject;
use avr_core::memory::{EntryTime, L2Entry, MemoryEntry, RetrievalKeys};
use avr_core::retrieval::{Priority, RankedEntry};

fn main() -> anyhow::Result<()> {
    let fixture = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/safe_copy");
    let task = RepairTask::load(&fixture.join("task.json"))?;
    let crash = std::fs::read_to_string(fixture.join("crash.txt"))?;

    let memory = RankedEntry {
        entry: MemoryEntry::L2(L2Entry {
            keys: RetrievalKeys {
                instance_id: "safecopy.cve-2022-0042".into(),
                ..task.keys.clone()
            },
            fix_patch: "--- a/utils.c\n+++ b/utils.c\n@@ -44,1 +44,3 @@\n+    if (len > COPY_CAP)\n+        len = COPY_CAP;\n     memcpy(dst, src, len);\n".into(),
            rationale: "clamp the caller-supplied length to the destination size".into(),
        }),
        similarity: 0.82,
        priority: Priority::P1,
        time: EntryTime::Cve(avr_core::memory::parse_timestamp("safecopy.cve-2022-0042").unwrap()),
    };
    let memories = [memory];

    let mut locator = PromptInput::new(PromptPhase::Locator, &task.keys, 1);
    locator.crash_log = Some(&crash);
    locator.memories = &memories;
    let rendered = render_prompt(&locator);
    println!("== locator ({} chars, {} memories) ==\n{}", rendered.size(), rendered.memories_included, rendered.user_text());

    let loc = LocalizationObject {
        file: "utils.c".into(),
        line_start: 40,
        line_end: 46,
        rank: 1,
        reason: "crash site".into(),
    };
    let mut patcher = PromptInput::new(PromptPhase::Patcher, &task.keys, 1);
    patcher.localization = Some(&loc);
    patcher.memories = &memories;
    patcher.budget = 1_500;
    let rendered = render_prompt(&patcher);
    println!("== patcher, budget 1500 ({} chars, {} memories) ==\n{}", rendered.size(), rendered.memories_included, rendered.user_text());
    Ok(())
}
