mod common;

use avr_core::agent::{Agent, AgentConfig, Outcome, TrajectoryRecord, Transition};
use avr_core::gateway::{PromptPhase, ScriptedGateway};
use avr_core::memory::Tier;
use avr_core::oracle::{Oracle, OracleLimits};
use avr_core::retrieval::embed::DeterministicEmbedder;

use common::*;

fn memory_event(report: &avr_core::agent::SessionReport, phase: PromptPhase, attempt: u32) -> Vec<String> {
    report
        .trajectory
        .iter()
        .find_map(|r| match r {
            TrajectoryRecord::Event { phase: p, attempt: a, event, detail } if *p == phase && *a == attempt && event == "memories" => {
                serde_json::from_value(detail.clone()).ok()
            }
            _ => None,
        })
        .unwrap_or_default()
}

#[test]
fn pristine_fixture_is_vulnerable_with_three_passing_tests() {
    let dir = tempfile::tempdir().unwrap();
    let task = safe_copy_task(dir.path());
    let mut oracle = Oracle::new(task.oracle.clone(), OracleLimits::default()).unwrap();
    let v = oracle.validate_pristine(&task.root).unwrap();
    assert!(!v.vuln_mitigated);
    assert!(v.functionality_preserved);
    assert!(v.build_ok);
    assert_eq!(oracle.baseline().unwrap().len(), 3);
    assert_eq!(oracle.calls(), 0);
    assert!(v.logs.contains("AddressSanitizer"));
}

#[test]
fn regression_then_fix_records_both_attempts() {
    let store = empty_store();
    let report = run_fixture("default", &store);
    assert_eq!(report.outcome, Outcome::Success);
    assert_eq!(report.failed_attempts, 1);
    assert_eq!(report.oracle_calls, 2);
    let t: Vec<Transition> = report.attempts.iter().map(|a| a.transition).collect();
    assert_eq!(t, [Transition::Regenerate, Transition::Success]);
    let first = report.attempts[0].verdict.as_ref().unwrap();
    assert!(first.vuln_mitigated && !first.functionality_preserved);
    assert!(report.final_diff.contains("+    if (len > COPY_CAP)"));
    assert_eq!(report.localization_success, Some(true));
    assert!(report.usage_estimated);
    // Regenerate keeps the localization, so the locator ran once.
    assert!(memory_event(&report, PromptPhase::Locator, 2).is_empty());
    let compressed = report.trajectory.iter().any(|r| {
        matches!(r, TrajectoryRecord::Event { event, detail, .. }
            if event == "compressed" && detail["failure_log"].as_str().unwrap_or("").contains("copy_full_capacity"))
    });
    assert!(compressed, "failure log should name the failing test");
}

#[test]
fn recorded_trajectory_replays_to_the_same_result() {
    let store = empty_store();
    let first = run_fixture("default", &store);
    let out = tempfile::tempdir().unwrap();
    let (_, traj) = first.write_to(out.path()).unwrap();

    let scratch = tempfile::tempdir().unwrap();
    let task = safe_copy_task(scratch.path());
    let mut gw = ScriptedGateway::from_file(&traj).unwrap();
    let emb = DeterministicEmbedder::default();
    let mut agent = Agent::new(&mut gw, &emb, AgentConfig::default());
    let second = agent.run_session(&task, &empty_store()).unwrap();
    assert_eq!(second.outcome, first.outcome);
    assert_eq!(second.final_diff, first.final_diff);
    assert_eq!(second.attempts.len(), first.attempts.len());
    assert_eq!(gw.remaining(), 0);
}

#[test]
fn later_session_sees_consolidated_memories() {
    let store = empty_store();
    run_fixture("default", &store);
    assert_eq!(store.read().unwrap().count(Tier::L3), 1);

    let scratch = tempfile::tempdir().unwrap();
    let mut task = safe_copy_task(scratch.path());
    task.keys.instance_id = "safecopy.cve-2024-0002".into();
    let mut gw = transcript("default");
    let emb = DeterministicEmbedder::default();
    let mut agent = Agent::new(&mut gw, &emb, AgentConfig::default());
    let report = agent.run_session(&task, &store).unwrap();
    assert_eq!(report.outcome, Outcome::Success);

    let locator = memory_event(&report, PromptPhase::Locator, 1);
    assert!(locator.iter().any(|m| m.starts_with("L2:")), "{locator:?}");
    assert!(locator.iter().all(|m| !m.starts_with("L3:")), "{locator:?}");
    let first_patch = memory_event(&report, PromptPhase::Patcher, 1);
    assert!(first_patch.iter().all(|m| !m.starts_with("L3:")), "{first_patch:?}");
    let retry = memory_event(&report, PromptPhase::Patcher, 2);
    assert!(retry.iter().any(|m| m.starts_with("L3:")), "{retry:?}");
}

#[test]
fn exhausted_session_leaves_memory_unchanged() {
    let store = empty_store();
    let report = run_fixture("four_failures", &store);
    assert!(matches!(report.outcome, Outcome::Exhausted { .. }));
    assert!(report.attempts.iter().all(|a| a.transition == Transition::Relocate));
    assert!(report.final_diff.is_empty());
    let st = store.read().unwrap();
    assert!(st.is_empty());
    assert_eq!(st.completed_tasks(), 1);
}

#[test]
fn empty_transcript_ends_without_oracle_calls() {
    let scratch = tempfile::tempdir().unwrap();
    let task = safe_copy_task(scratch.path());
    let mut gw = ScriptedGateway::from_jsonl("").unwrap();
    let emb = DeterministicEmbedder::default();
    let mut agent = Agent::new(&mut gw, &emb, AgentConfig::default());
    let report = agent.run_session(&task, &empty_store()).unwrap();
    match &report.outcome {
        Outcome::Exhausted { reason } => assert!(reason.contains("GatewayExhausted"), "{reason}"),
        o => panic!("unexpected {o:?}"),
    }
    assert_eq!(report.oracle_calls, 0);
}
