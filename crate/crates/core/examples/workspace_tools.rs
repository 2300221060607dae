//! Edits a scratch copy of the fixture through the agent's tools, then
//! diffs, compresses and rolls back.

use std::path::PathBuf;

use avr_core::ops::prepare_workspace;
use avr_core::workspace::compress::{log_compress, SessionTrace, DEFAULT_COMPRESS_BUDGET};
use avr_core::workspace::{ToolCall, ToolName, Workspace, WorkspaceConfig};

fn main() -> anyhow::Result<()> {
    let fixture = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/safe_copy/repo");
    let scratch = tempfile::tempdir()?;
    let root = prepare_workspace(&fixture, &scratch.path().join("repo"))?;
    let mut ws = Workspace::open(&root, WorkspaceConfig::default())?;

    println!("{}", ws.view("utils.c", Some((38, 47))).output);
    println!("{}", ws.search("memcpy", ".").output);

    let before = ws.snapshot()?;
    let call = ToolCall::new(
        ToolName::StrReplace,
        &[
            ("path", "utils.c"),
            ("old", "    memcpy(dst, src, len);"),
            ("new", "    if (len > COPY_CAP)\n        len = COPY_CAP;\n    memcpy(dst, src, len);"),
        ],
    );
    let r = ws.dispatch(&call);
    println!("str_replace ok={} {}", r.ok, r.output);
    println!("bash: {}", ws.bash("grep -c COPY_CAP utils.c", false).output.trim());

    let diff = ws.submit()?;
    println!("--- candidate diff ---\n{diff}");

    let trace = SessionTrace {
        visited: ws.visited().to_vec(),
        applied_diff: diff,
    };
    let logs = "==1==ERROR: AddressSanitizer: heap-buffer-overflow\nFAIL: copy_full_capacity\n";
    let ctx = log_compress(logs, &trace, DEFAULT_COMPRESS_BUDGET);
    println!("compressed context ({} chars):\n{}", ctx.size(), ctx.render());

    ws.rollback(&before)?;
    println!("after rollback the diff is empty: {}", ws.submit()?.is_empty());
    Ok(())
}
