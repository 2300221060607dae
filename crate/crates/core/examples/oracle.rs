//! Runs the fixture's build, PoC and regression commands on the pristine
//! repository and on a patched copy.

use std::path::PathBuf;

use avr_core::agent::RepairTask;
use avr_core::ops::prepare_workspace;
use avr_core::oracle::{Oracle, OracleLimits};

fn main() -> anyhow::Result<()> {
    let fixture = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/safe_copy");
    let task = RepairTask::load(&fixture.join("task.json"))?;
    let scratch = tempfile::tempdir()?;
    let root = prepare_workspace(&task.root, &scratch.path().join("repo"))?;

    let mut oracle = Oracle::new(task.oracle.clone(), OracleLimits::default())?;
    let pristine = oracle.validate_pristine(&root)?;
    println!(
        "pristine: build_ok={} mitigated={} preserved={} baseline={:?}",
        pristine.build_ok,
        pristine.vuln_mitigated,
        pristine.functionality_preserved,
        oracle.baseline()
    );

    let utils = root.join("utils.c");
    let text = std::fs::read_to_string(&utils)?;
    std::fs::write(
        &utils,
        text.replace("    memcpy(dst, src, len);", "    if (len > COPY_CAP)\n        len = COPY_CAP;\n    memcpy(dst, src, len);"),
    )?;
    let v = oracle.check_vul(&root)?;
    println!(
        "patched: build_ok={} mitigated={} preserved={} oracle calls={}",
        v.build_ok,
        v.vuln_mitigated,
        v.functionality_preserved,
        oracle.calls()
    );
    Ok(())
}
