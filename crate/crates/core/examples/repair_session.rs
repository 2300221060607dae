//! End-to-end repair of the fixture with a scripted model, followed by a
//! second session that benefits from the memories the first one wrote.
//!
//! cargo run --example repair_session -- [transcript.jsonl]

use std::path::PathBuf;

use avr_core::agent::{Agent, AgentConfig, RepairTask};
use avr_core::gateway::ScriptedGateway;
use avr_core::memory::{MemoryStore, Tier};
use avr_core::ops::prepare_workspace;
use avr_core::retrieval::embed::DeterministicEmbedder;

fn main() -> anyhow::Result<()> {
    let fixture = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/safe_copy");
    let transcript = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| fixture.join("transcript.jsonl"));
    let store = MemoryStore::new().into_shared();
    let emb = DeterministicEmbedder::default();

    for (round, instance) in ["safecopy.cve-2024-0001", "safecopy.cve-2024-0002"].into_iter().enumerate() {
        let scratch = tempfile::tempdir()?;
        let mut task = RepairTask::load(&fixture.join("task.json"))?;
        task.root = prepare_workspace(&task.root, &scratch.path().join("repo"))?;
        task.keys.instance_id = instance.into();

        let mut gw = ScriptedGateway::from_file(&transcript)?;
        let mut agent = Agent::new(&mut gw, &emb, AgentConfig::default());
        let report = agent.run_session(&task, &store)?;
        println!(
            "session {}: {:?} after {} failed attempts, {} oracle calls",
            round + 1,
            report.outcome,
            report.failed_attempts,
            report.oracle_calls
        );
        for a in &report.attempts {
            println!("  attempt {}: {:?}", a.number, a.transition);
        }
        if report.succeeded() {
            println!("{}", report.final_diff);
        }
        let st = store.read().unwrap();
        println!("  memory: L2={} L3={}", st.count(Tier::L2), st.count(Tier::L3));
    }
    Ok(())
}
