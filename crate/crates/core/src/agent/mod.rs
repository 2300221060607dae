//! One repair session: localize, patch, verify, and learn from the result.
//!
//! The Locator and Patcher are model-driven tool loops. Verification is
//! plain control logic: run the oracle, map the verdict to
//! Success / Relocate / Regenerate, compress the failed attempt for the next
//! prompt, and roll the workspace back to pristine. The loop stops after the
//! configured number of failed attempts.

mod report;
mod session;
mod task;

use std::time::{Duration, Instant};

use serde_json::json;

pub use report::{cost_usd, estimate_tokens, MemoryUpdate, ModelPrice, PriceTable, SessionReport, TrajectoryRecord};
pub use session::{decide_transition, Attempt, Outcome, Phase, RepairSession, Transition, DEFAULT_MAX_FAILED_ATTEMPTS};
pub use task::{RepairTask, TaskError, TaskFile};

use crate::gateway::{
    render_prompt, tool_schemas, ChatTurn, Completion, CompletionRequest, Gateway, GatewayError, PromptInput,
    PromptPhase, Usage, DEFAULT_MAX_TURNS, DEFAULT_PROMPT_BUDGET,
};
use crate::localizer::{
    index_repository, iter_grep, parse_crash_report, same_file, LocalizationObject, SymbolIndex, DEFAULT_CONTEXT_RADIUS,
    DEFAULT_K,
};
use crate::memory::{consolidate_success, InsertOutcome, InsightSource, SharedMemory, Tier};
use crate::oracle::{Oracle, OracleError, OracleLimits, VerificationVerdict};
use crate::retrieval::embed::Embedder;
use crate::retrieval::{rank_order, retrieve, Query, RankedEntry, DEFAULT_K_MIN, DEFAULT_TOP_N};
use crate::workspace::compress::DEFAULT_COMPRESS_BUDGET;
use crate::workspace::{
    log_compress, SessionTrace, SnapshotId, ToolCall, ToolErrorKind, ToolName, ToolResult, Workspace, WorkspaceConfig,
    WorkspaceError,
};

const LOCATOR_TOOLS: [ToolName; 3] = [ToolName::IterGrep, ToolName::View, ToolName::Search];
const PATCHER_TOOLS: [ToolName; 6] = [
    ToolName::View,
    ToolName::Search,
    ToolName::Create,
    ToolName::StrReplace,
    ToolName::Bash,
    ToolName::Submit,
];

#[derive(Debug, Clone)]
pub struct AgentConfig {
    pub max_failed_attempts: u32,
    pub max_turns: usize,
    pub k_min: usize,
    pub top_n: usize,
    pub prompt_budget: usize,
    pub compress_budget: usize,
    pub iter_grep_k: usize,
    pub context_radius: usize,
    pub workspace: WorkspaceConfig,
    pub oracle: OracleLimits,
    pub model_name: String,
    pub pricing: PriceTable,
    /// Ask the model for L2 rationales and L3 insights; templates otherwise.
    pub model_insights: bool,
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self {
            max_failed_attempts: DEFAULT_MAX_FAILED_ATTEMPTS,
            max_turns: DEFAULT_MAX_TURNS,
            k_min: DEFAULT_K_MIN,
            top_n: DEFAULT_TOP_N,
            prompt_budget: DEFAULT_PROMPT_BUDGET,
            compress_budget: DEFAULT_COMPRESS_BUDGET,
            iter_grep_k: DEFAULT_K,
            context_radius: DEFAULT_CONTEXT_RADIUS,
            workspace: WorkspaceConfig::default(),
            oracle: OracleLimits::default(),
            model_name: String::new(),
            pricing: PriceTable::new(),
            model_insights: true,
        }
    }
}

/// Problems that prevent a session from starting. Failures after the start
/// end the session as `Exhausted` instead.
#[derive(Debug, thiserror::Error)]
pub enum AgentError {
    #[error(transparent)]
    Workspace(#[from] WorkspaceError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
}

/// Why a phase could not produce its result.
#[derive(Debug)]
enum PhaseStop {
    Gateway(String),
    LocalizationFailure(String),
    Workspace(String),
}

impl PhaseStop {
    fn reason(&self) -> String {
        match self {
            PhaseStop::Gateway(m) => format!("GatewayExhausted: {m}"),
            PhaseStop::LocalizationFailure(m) => format!("LocalizationFailure: {m}"),
            PhaseStop::Workspace(m) => format!("workspace error: {m}"),
        }
    }
}

/// Finds the first JSON object in `text` that reads as a localization.
pub fn parse_localization(text: &str) -> Option<LocalizationObject> {
    let mut starts: Vec<usize> = text.match_indices(['{', '[']).map(|(i, _)| i).collect();
    starts.dedup();
    for i in starts {
        let mut de = serde_json::Deserializer::from_str(&text[i..]).into_iter::<serde_json::Value>();
        let Some(Ok(v)) = de.next() else { continue };
        let v = match v {
            serde_json::Value::Array(mut items) if !items.is_empty() => items.remove(0),
            other => other,
        };
        if let Ok(loc) = serde_json::from_value::<LocalizationObject>(v) {
            if loc.is_valid() {
                return Some(loc);
            }
        }
    }
    None
}

struct FixedInsights {
    rationale: Option<String>,
    transition: Option<String>,
}

impl InsightSource for FixedInsights {
    fn rationale(&self, _: &RepairSession, _: &str) -> Option<String> {
        self.rationale.clone()
    }

    fn transition_insight(&self, _: &RepairSession, _: &str, _: &str, _: &str) -> Option<String> {
        self.transition.clone()
    }
}

fn outcome_label(o: &InsertOutcome) -> String {
    match o {
        InsertOutcome::Inserted => "inserted".into(),
        InsertOutcome::Merged { kept } => format!("merged into {}:{}", kept.tier, kept.instance_id),
    }
}

/// Drives sessions with one gateway, embedder and configuration.
pub struct Agent<'a> {
    gateway: &'a mut dyn Gateway,
    embedder: &'a dyn Embedder,
    config: AgentConfig,
}

struct Run<'r> {
    task: &'r RepairTask,
    ws: Workspace,
    oracle: Oracle,
    session: RepairSession,
    trajectory: Vec<TrajectoryRecord>,
    usage: Usage,
    usage_estimated: bool,
    index: Option<SymbolIndex>,
    crash_log: String,
}

impl<'a> Agent<'a> {
    pub fn new(gateway: &'a mut dyn Gateway, embedder: &'a dyn Embedder, config: AgentConfig) -> Self {
        Self {
            gateway,
            embedder,
            config,
        }
    }

    pub fn config(&self) -> &AgentConfig {
        &self.config
    }

    /// Runs the phase machine on `task` until success or exhaustion.
    pub fn run_session(&mut self, task: &RepairTask, store: &SharedMemory) -> Result<SessionReport, AgentError> {
        let started = Instant::now();
        let ws = Workspace::open(&task.root, self.config.workspace.clone())?;
        let mut oracle = Oracle::new(task.oracle.clone(), self.config.oracle)?;
        let pristine = oracle.validate_pristine(ws.root())?;
        let mut run = Run {
            task,
            ws,
            oracle,
            session: RepairSession::new(task.keys.clone()),
            trajectory: Vec::new(),
            usage: Usage::default(),
            usage_estimated: false,
            index: None,
            crash_log: String::new(),
        };
        run.ws.rollback_to_original().map_err(WorkspaceError::from)?;
        run.event(PromptPhase::Verifier, 0, "pristine", json!({
            "vuln_mitigated": pristine.vuln_mitigated,
            "baseline_tests": run.oracle.baseline().map(|b| b.len()).unwrap_or(0),
        }));

        let mut last_failed_tree: Option<SnapshotId> = None;
        let mut next = Phase::Locate;
        let mut final_diff = String::new();

        loop {
            let number = run.session.attempts.len() as u32 + 1;
            run.ws.clear_trace();

            if next == Phase::Locate {
                run.session.phase = Phase::Locate;
                match self.locate(&mut run, store, number) {
                    Ok(loc) => run.session.current_loc = Some(loc),
                    Err(stop) => {
                        run.session.outcome = Some(Outcome::Exhausted { reason: stop.reason() });
                        break;
                    }
                }
            }

            run.session.phase = Phase::Patch;
            let candidate = match self.patch(&mut run, store, number) {
                Ok(c) => c,
                Err(stop) => {
                    run.session.outcome = Some(Outcome::Exhausted { reason: stop.reason() });
                    break;
                }
            };

            run.session.phase = Phase::Verify;
            let mut attempt = Attempt {
                number,
                localization: run.session.current_loc.clone(),
                patch: candidate.clone(),
                transition: Transition::Regenerate,
                verdict: None,
                failure_reason: None,
            };

            let failure_log;
            let mut stop_reason = None;
            let mut candidate_tree = None;
            if candidate.trim().is_empty() {
                attempt.failure_reason = Some("EmptyPatch: no edits were made".into());
                failure_log = "EmptyPatch: the patcher finished without changing any file.".to_string();
            } else {
                candidate_tree = run.ws.snapshot().ok();
                match run.oracle.check_vul(run.ws.root()) {
                    Ok(verdict) => {
                        attempt.transition = decide_transition(&verdict);
                        failure_log = verdict.logs.clone();
                        run.record_verdict(number, &verdict, attempt.transition);
                        attempt.verdict = Some(verdict);
                        if attempt.transition != Transition::Success {
                            attempt.failure_reason = Some(match attempt.transition {
                                Transition::Relocate => "vulnerability persists".into(),
                                _ => "regression introduced".into(),
                            });
                        }
                    }
                    Err(e) => {
                        failure_log = e.to_string();
                        attempt.failure_reason = Some(e.to_string());
                        stop_reason = Some(match e {
                            OracleError::OracleTimeout(_) => format!("OracleTimeout: {e}"),
                            _ => format!("oracle error: {e}"),
                        });
                    }
                }
            }

            if attempt.transition == Transition::Success {
                if let (Some(failed), Some(now)) = (&last_failed_tree, &candidate_tree) {
                    run.session.correction_delta = run.ws.diff_between(failed, now).ok().filter(|d| !d.is_empty());
                }
                final_diff = candidate;
                run.session.attempts.push(attempt);
                run.session.outcome = Some(Outcome::Success);
                break;
            }

            let trace = SessionTrace {
                visited: run.ws.visited().to_vec(),
                applied_diff: candidate.clone(),
            };
            let compressed = log_compress(&failure_log, &trace, self.config.compress_budget);
            run.event(PromptPhase::Verifier, number, "compressed", serde_json::to_value(&compressed).unwrap_or_default());
            run.session.compressed = Some(compressed);
            if !candidate.trim().is_empty() {
                last_failed_tree = candidate_tree;
            }
            let routing = attempt.transition;
            run.session.attempts.push(attempt);
            if let Err(e) = run.ws.rollback_to_original() {
                run.session.outcome = Some(Outcome::Exhausted { reason: format!("rollback failed: {e}") });
                break;
            }
            if let Some(reason) = stop_reason {
                run.session.outcome = Some(Outcome::Exhausted { reason });
                break;
            }
            if run.session.failed_attempts() >= self.config.max_failed_attempts {
                run.session.outcome = Some(Outcome::Exhausted {
                    reason: format!("reached the cap of {} failed patch attempts", self.config.max_failed_attempts),
                });
                break;
            }
            next = routing.next_phase();
        }
        run.session.phase = Phase::Done;

        let memory_update = if run.session.outcome == Some(Outcome::Success) {
            Some(self.consolidate(&mut run, store))
        } else {
            None
        };
        if let Ok(mut st) = store.write() {
            st.complete_task();
        }

        let localization_success = if task.ground_truth_files.is_empty() {
            None
        } else {
            run.session.current_loc.as_ref().map(|loc| {
                task.ground_truth_files
                    .iter()
                    .any(|g| same_file(&loc.file, g) || same_file(g, &loc.file))
            })
        };
        let cost = cost_usd(&self.config.pricing, &self.config.model_name, run.usage);
        Ok(SessionReport {
            instance_id: task.keys.instance_id.clone(),
            outcome: run.session.outcome.clone().expect("loop sets an outcome"),
            failed_attempts: run.session.failed_attempts(),
            oracle_calls: run.oracle.calls(),
            final_diff,
            attempts: run.session.attempts.clone(),
            localization_success,
            usage: run.usage,
            usage_estimated: run.usage_estimated,
            cost_usd: cost,
            elapsed_secs: started.elapsed().as_secs_f64(),
            memory_update,
            trajectory: run.trajectory,
        })
    }

    fn retrieve_for(&self, store: &SharedMemory, task: &RepairTask, tiers: &[Tier], override_text: Option<&str>) -> Vec<RankedEntry> {
        let query = Query::new(task.keys.clone()).with_limits(self.config.k_min, self.config.top_n);
        let found: Vec<RankedEntry> = {
            let st = store.read().expect("memory lock poisoned");
            let mut all: Vec<RankedEntry> = tiers
                .iter()
                .flat_map(|&t| retrieve(&st, t, &query, override_text, self.embedder))
                .collect();
            all.sort_by(rank_order);
            all
        };
        if !found.is_empty() {
            let ids: Vec<_> = found.iter().map(|r| r.entry.id()).collect();
            if let Ok(mut st) = store.write() {
                st.mark_retrieved(ids.iter());
            }
        }
        found
    }

    fn complete(&mut self, run: &mut Run<'_>, phase: PromptPhase, attempt: u32, history: &[ChatTurn], tools: &[ToolName]) -> Result<Completion, GatewayError> {
        let schemas = tool_schemas(tools);
        let result = self.gateway.complete(&CompletionRequest {
            phase,
            attempt,
            history,
            tools: &schemas,
        });
        if let Ok(c) = &result {
            match c.usage {
                Some(u) => {
                    run.usage.prompt_tokens += u.prompt_tokens;
                    run.usage.completion_tokens += u.completion_tokens;
                }
                None => {
                    let prompt_chars: usize = history.iter().map(|t| t.content.chars().count()).sum();
                    let completion_chars = c.turn.content.chars().count()
                        + c.turn.tool_calls.iter().map(|t| serde_json::to_string(&t.args).map(|s| s.len()).unwrap_or(0)).sum::<usize>();
                    run.usage.prompt_tokens += estimate_tokens(prompt_chars);
                    run.usage.completion_tokens += estimate_tokens(completion_chars);
                    run.usage_estimated = true;
                }
            }
        }
        result
    }

    /// Shared tool loop. Returns the final assistant turn, or `None` when
    /// the turn budget ran out first.
    fn converse(
        &mut self,
        run: &mut Run<'_>,
        phase: PromptPhase,
        attempt: u32,
        history: &mut Vec<ChatTurn>,
        tools: &[ToolName],
        mut accept: impl FnMut(&ChatTurn, &mut Run<'_>) -> Result<bool, String>,
    ) -> Result<Option<ChatTurn>, PhaseStop> {
        for t in history.iter() {
            run.turn(phase, attempt, t.clone());
        }
        for _ in 0..self.config.max_turns {
            let completion = match self.complete(run, phase, attempt, history, tools) {
                Ok(c) => c,
                Err(GatewayError::MalformedToolCall(m)) => {
                    let note = ChatTurn::user(format!("Your last tool call was rejected as malformed: {m}. Fix the call and try again."));
                    run.event(phase, attempt, "malformed_tool_call", json!(m));
                    run.turn(phase, attempt, note.clone());
                    history.push(note);
                    continue;
                }
                Err(e) => return Err(PhaseStop::Gateway(e.to_string())),
            };
            let turn = completion.turn;
            run.turn(phase, attempt, turn.clone());
            history.push(turn.clone());
            if turn.tool_calls.is_empty() {
                match accept(&turn, run) {
                    Ok(true) => return Ok(Some(turn)),
                    Ok(false) => continue,
                    Err(nudge) => {
                        let note = ChatTurn::user(nudge);
                        run.turn(phase, attempt, note.clone());
                        history.push(note);
                        continue;
                    }
                }
            }
            let mut submitted = false;
            for (i, call) in turn.tool_calls.iter().enumerate() {
                let result = if !tools.contains(&call.name) {
                    ToolResult::err(ToolErrorKind::UnknownTool, format!("{} is not available in this phase", call.name.as_str()))
                } else if call.name == ToolName::Submit {
                    submitted = true;
                    ToolResult::ok("submitted")
                } else {
                    run.execute(call, &self.config)
                };
                run.trajectory.push(TrajectoryRecord::Tool {
                    phase,
                    attempt,
                    call: call.clone(),
                    result: result.clone(),
                });
                let text = match result.error_kind {
                    None => result.output,
                    Some(kind) => format!("error ({}): {}", serde_json::to_value(kind).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default(), result.output),
                };
                let reply = ChatTurn::tool_reply(turn.call_id(i), text);
                history.push(reply);
            }
            if submitted {
                return Ok(Some(turn));
            }
        }
        Ok(None)
    }

    fn locate(&mut self, run: &mut Run<'_>, store: &SharedMemory, attempt: u32) -> Result<LocalizationObject, PhaseStop> {
        let poc = run.oracle.run_poc(run.ws.root()).map_err(|e| PhaseStop::LocalizationFailure(format!("PoC run failed: {e}")))?;
        run.crash_log = poc.output;
        run.ws.rollback_to_original().map_err(|e| PhaseStop::Workspace(e.to_string()))?;

        let memories = self.retrieve_for(store, run.task, &[Tier::L1, Tier::L2], None);
        let prompt = render_prompt(&PromptInput {
            crash_log: Some(&run.crash_log),
            memories: &memories,
            compressed: run.session.compressed.as_ref(),
            budget: self.config.prompt_budget,
            ..PromptInput::new(PromptPhase::Locator, &run.task.keys, attempt)
        });
        run.event(PromptPhase::Locator, attempt, "memories", json!(memory_ids(&memories[..prompt.memories_included])));
        let mut history = prompt.turns;
        let mut found = None;
        let last = self.converse(run, PromptPhase::Locator, attempt, &mut history, &LOCATOR_TOOLS, |turn, run| {
            match parse_localization(&turn.content) {
                Some(loc) if run.ws.resolve(&loc.file).map(|p| p.is_file()).unwrap_or(false) => {
                    found = Some(loc);
                    Ok(true)
                }
                Some(loc) => Err(format!("`{}` is not a file in the repository. Reply with a JSON object naming an existing file.", loc.file)),
                None => Err("Reply with one JSON object: {\"file\": ..., \"line_start\": ..., \"line_end\": ..., \"reason\": ...}".into()),
            }
        })?;
        match (found, last) {
            (Some(loc), Some(_)) => Ok(loc),
            _ => Err(PhaseStop::LocalizationFailure(format!(
                "no parseable localization after {} turns",
                self.config.max_turns
            ))),
        }
    }

    fn patch(&mut self, run: &mut Run<'_>, store: &SharedMemory, attempt: u32) -> Result<String, PhaseStop> {
        let failed_patch = run.session.last_failed().map(|a| a.patch.clone());
        let mut memories = Vec::new();
        if let Some(fp) = &failed_patch {
            memories.extend(self.retrieve_for(store, run.task, &[Tier::L3], Some(fp)));
        }
        memories.extend(self.retrieve_for(store, run.task, &[Tier::L1, Tier::L2], None));
        let prompt = render_prompt(&PromptInput {
            localization: run.session.current_loc.as_ref(),
            memories: &memories,
            compressed: run.session.compressed.as_ref(),
            budget: self.config.prompt_budget,
            ..PromptInput::new(PromptPhase::Patcher, &run.task.keys, attempt)
        });
        let included: Vec<&RankedEntry> = memories
            .iter()
            .filter(|m| m.entry.tier() != Tier::L3 || attempt > 1)
            .take(prompt.memories_included)
            .collect();
        run.event(PromptPhase::Patcher, attempt, "memories", json!(included.iter().map(|m| id_label(m)).collect::<Vec<_>>()));
        let mut history = prompt.turns;
        self.converse(run, PromptPhase::Patcher, attempt, &mut history, &PATCHER_TOOLS, |_, _| Ok(true))?;
        run.ws.submit().map_err(|e| PhaseStop::Workspace(e.to_string()))
    }

    fn ask_verifier(&mut self, run: &mut Run<'_>, attempt: u32, accepted: &str, failed: Option<&str>) -> Option<String> {
        let prompt = render_prompt(&PromptInput {
            accepted_patch: Some(accepted),
            failed_patch: failed,
            budget: self.config.prompt_budget,
            ..PromptInput::new(PromptPhase::Verifier, &run.task.keys, attempt)
        });
        for t in &prompt.turns {
            run.turn(PromptPhase::Verifier, attempt, t.clone());
        }
        match self.complete(run, PromptPhase::Verifier, attempt, &prompt.turns, &[]) {
            Ok(c) => {
                run.turn(PromptPhase::Verifier, attempt, c.turn.clone());
                Some(c.turn.content.trim().to_string()).filter(|s| !s.is_empty())
            }
            Err(e) => {
                run.event(PromptPhase::Verifier, attempt, "insight_unavailable", json!(e.to_string()));
                None
            }
        }
    }

    fn consolidate(&mut self, run: &mut Run<'_>, store: &SharedMemory) -> MemoryUpdate {
        let attempt = run.session.attempts.len() as u32;
        let accepted = run.session.accepted_patch().unwrap_or_default().to_string();
        let failed = run.session.last_failed().map(|a| a.patch.clone());
        let insights = if self.config.model_insights {
            FixedInsights {
                rationale: self.ask_verifier(run, attempt, &accepted, None),
                transition: match &failed {
                    Some(f) => self.ask_verifier(run, attempt, &accepted, Some(f)),
                    None => None,
                },
            }
        } else {
            FixedInsights {
                rationale: None,
                transition: None,
            }
        };
        let mut st = store.write().expect("memory lock poisoned");
        match consolidate_success(&mut st, &run.session, self.embedder, &insights) {
            Ok(c) => {
                let update = MemoryUpdate {
                    l2: Some(outcome_label(&c.l2_outcome)),
                    l3: c.l3_outcome.as_ref().map(outcome_label),
                };
                run.event(PromptPhase::Verifier, attempt, "consolidated", json!({"l2": update.l2, "l3": update.l3}));
                update
            }
            Err(e) => {
                log::warn!("consolidation failed: {e}");
                run.event(PromptPhase::Verifier, attempt, "consolidation_failed", json!(e.to_string()));
                MemoryUpdate { l2: None, l3: None }
            }
        }
    }
}

fn id_label(m: &RankedEntry) -> String {
    format!("{}:{}", m.entry.tier(), m.entry.keys().instance_id)
}

fn memory_ids(ms: &[RankedEntry]) -> Vec<String> {
    ms.iter().map(id_label).collect()
}

impl Run<'_> {
    fn turn(&mut self, phase: PromptPhase, attempt: u32, turn: ChatTurn) {
        self.trajectory.push(TrajectoryRecord::Turn { phase, attempt, turn });
    }

    fn event(&mut self, phase: PromptPhase, attempt: u32, event: &str, detail: serde_json::Value) {
        self.trajectory.push(TrajectoryRecord::Event {
            phase,
            attempt,
            event: event.to_string(),
            detail,
        });
    }

    fn record_verdict(&mut self, attempt: u32, v: &VerificationVerdict, t: Transition) {
        self.event(PromptPhase::Verifier, attempt, "verdict", json!({
            "vuln_mitigated": v.vuln_mitigated,
            "functionality_preserved": v.functionality_preserved,
            "build_ok": v.build_ok,
            "transition": t,
        }));
    }

    fn execute(&mut self, call: &ToolCall, config: &AgentConfig) -> ToolResult {
        match call.name {
            ToolName::IterGrep => self.iter_grep(call, config),
            _ => self.ws.dispatch(call),
        }
    }

    fn iter_grep(&mut self, call: &ToolCall, config: &AgentConfig) -> ToolResult {
        let Some(symbol) = call.arg("symbol") else {
            return ToolResult::err(ToolErrorKind::InvalidArgs, "missing argument `symbol`");
        };
        let k = call.arg("k").and_then(|k| k.trim().parse().ok()).unwrap_or(config.iter_grep_k);
        if self.index.is_none() {
            match index_repository(self.ws.root()) {
                Ok(ix) => self.index = Some(ix),
                Err(e) => return ToolResult::err(ToolErrorKind::Io, e.to_string()),
            }
        }
        let report = parse_crash_report(&self.crash_log);
        let index = self.index.as_ref().expect("index built above");
        match iter_grep(index, symbol, report.as_ref(), k, config.context_radius) {
            Ok(locs) => {
                let mut out = String::new();
                for l in &locs {
                    out.push_str(&format!("{}. {}:{}-{}  {}\n", l.rank, l.file, l.line_start, l.line_end, l.reason));
                }
                ToolResult::ok(out)
            }
            Err(e) => ToolResult::err(ToolErrorKind::NoMatch, e.to_string()),
        }
    }
}

/// Timeout for the OpenAI backend's HTTP client.
pub const DEFAULT_REQUEST_TIMEOUT: Duration = Duration::from_secs(300);

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn localization_from_prose() {
        let text = "The overflow comes from an unchecked length.\n```json\n{\"file\": \"utils.c\", \"line_start\": 40, \"line_end\": 50, \"reason\": \"len unchecked\"}\n```";
        let loc = parse_localization(text).unwrap();
        assert_eq!((loc.file.as_str(), loc.line_start, loc.line_end, loc.rank), ("utils.c", 40, 50, 1));
        assert!(parse_localization("no json here {oops}").is_none());
        assert!(parse_localization(r#"{"file":"a.c","line_start":9,"line_end":3}"#).is_none());
        let arr = parse_localization(r#"[{"file":"a.c","line_start":1,"line_end":3}]"#).unwrap();
        assert_eq!(arr.file, "a.c");
    }
}
