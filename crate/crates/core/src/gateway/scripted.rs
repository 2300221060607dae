//! Replays recorded assistant turns from a JSON-lines transcript.
//!
//! Each line holds one assistant turn:
//!
//! ```json
//! {"phase":"patcher","attempt":1,"role":"assistant","content":"...",
//!  "tool_calls":[{"name":"str_replace","args":{"path":"a.c","old":"x","new":"y"}}]}
//! ```
//!
//! Turns are queued per `(phase, attempt)` and handed out in file order.
//! Lines whose `role` is not `assistant` are skipped, so a recorded
//! `trajectory.jsonl` replays as a transcript.
//! A line without `attempt` serves any attempt of its phase once the exact
//! queue is empty. Tool arguments may be an `args` object or an `arguments`
//! JSON string; they are validated only when the turn is replayed, so a bad
//! call surfaces as [`GatewayError::MalformedToolCall`] at that point.

use std::collections::{BTreeMap, VecDeque};
use std::path::Path;

use serde::Deserialize;
use serde_json::Value;

use super::{
    parse_tool_call, validate_history, ChatTurn, Completion, CompletionRequest, Gateway, GatewayError, PromptPhase,
    Role,
};

#[derive(Debug, Clone, Deserialize)]
struct ScriptLine {
    phase: PromptPhase,
    #[serde(default)]
    attempt: Option<u32>,
    #[serde(default)]
    role: Option<Role>,
    #[serde(default)]
    content: String,
    #[serde(default)]
    tool_calls: Vec<Value>,
}

#[derive(Debug, thiserror::Error)]
pub enum ScriptError {
    #[error("transcript line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Default)]
pub struct ScriptedGateway {
    exact: BTreeMap<(PromptPhase, u32), VecDeque<ScriptLine>>,
    any_attempt: BTreeMap<PromptPhase, VecDeque<ScriptLine>>,
    served: usize,
}

impl ScriptedGateway {
    pub fn from_jsonl(text: &str) -> Result<Self, ScriptError> {
        let mut g = Self::default();
        for (i, raw) in text.lines().enumerate() {
            let raw = raw.trim();
            if raw.is_empty() || raw.starts_with("//") {
                continue;
            }
            let line: ScriptLine = serde_json::from_str(raw).map_err(|e| ScriptError::Parse {
                line: i + 1,
                message: e.to_string(),
            })?;
            // Tool results, events and non-assistant turns (e.g. from a
            // recorded trajectory) are not replayed.
            if line.role != Some(Role::Assistant) {
                continue;
            }
            match line.attempt {
                Some(a) => g.exact.entry((line.phase, a)).or_default().push_back(line),
                None => g.any_attempt.entry(line.phase).or_default().push_back(line),
            }
        }
        Ok(g)
    }

    pub fn from_file(path: &Path) -> Result<Self, ScriptError> {
        Self::from_jsonl(&std::fs::read_to_string(path)?)
    }

    /// Turns not yet replayed.
    pub fn remaining(&self) -> usize {
        self.exact.values().map(VecDeque::len).sum::<usize>() + self.any_attempt.values().map(VecDeque::len).sum::<usize>()
    }

    pub fn served(&self) -> usize {
        self.served
    }

    fn next_line(&mut self, phase: PromptPhase, attempt: u32) -> Option<ScriptLine> {
        if let Some(l) = self.exact.get_mut(&(phase, attempt)).and_then(VecDeque::pop_front) {
            return Some(l);
        }
        self.any_attempt.get_mut(&phase).and_then(VecDeque::pop_front)
    }
}

fn tool_call_from_value(v: &Value) -> Result<crate::workspace::ToolCall, GatewayError> {
    let (name, args) = match v.get("function") {
        Some(f) => (f.get("name"), f.get("arguments")),
        None => (v.get("name"), v.get("args").or_else(|| v.get("arguments"))),
    };
    let name = name
        .and_then(Value::as_str)
        .ok_or_else(|| GatewayError::MalformedToolCall(format!("tool call without a name: {v}")))?;
    parse_tool_call(name, args.unwrap_or(&Value::Null))
}

impl Gateway for ScriptedGateway {
    fn complete(&mut self, request: &CompletionRequest<'_>) -> Result<Completion, GatewayError> {
        validate_history(request.history)?;
        let line = self.next_line(request.phase, request.attempt).ok_or_else(|| {
            GatewayError::GatewayExhausted(format!(
                "no scripted turn left for {} attempt {}",
                request.phase, request.attempt
            ))
        })?;
        self.served += 1;
        let tool_calls = line
            .tool_calls
            .iter()
            .map(tool_call_from_value)
            .collect::<Result<Vec<_>, _>>()?;
        let call_ids = (0..tool_calls.len()).map(|i| format!("s{}_{i}", self.served)).collect();
        Ok(Completion {
            turn: ChatTurn {
                role: Role::Assistant,
                content: line.content,
                tool_calls,
                call_ids,
                tool_call_id: None,
            },
            usage: None,
        })
    }
}
