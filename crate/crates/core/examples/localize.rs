//! Indexes the bundled C fixture with tree-sitter and ranks the sites of a
//! symbol against its sanitizer report.
//!
//! cargo run --example localize -- [symbol]

use std::path::PathBuf;

use avr_core::localizer::{index_repository, iter_grep, parse_crash_report};

fn main() -> anyhow::Result<()> {
    let fixture = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/safe_copy");
    let symbol = std::env::args().nth(1).unwrap_or_else(|| "len".into());

    let index = index_repository(&fixture.join("repo"))?;
    let crash = std::fs::read_to_string(fixture.join("crash.txt"))?;
    let report = parse_crash_report(&crash);
    if let Some(r) = &report {
        println!("fault: {} with {} frames", r.fault_kind, r.frames.len());
    }
    for loc in iter_grep(&index, &symbol, report.as_ref(), 5, 3)? {
        println!("#{} {}:{}-{}  {}", loc.rank, loc.file, loc.line_start, loc.line_end, loc.reason);
    }
    Ok(())
}
