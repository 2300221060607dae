//! Chat-completion gateway with tool calling.

mod openai;
mod prompt;
mod scripted;

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::workspace::{ToolCall, ToolName};

pub use openai::OpenAiGateway;
pub use prompt::{render_prompt, PromptInput, RenderedPrompt, DEFAULT_PROMPT_BUDGET};
pub use scripted::ScriptedGateway;

pub const DEFAULT_MAX_TURNS: usize = 30;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
    Tool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PromptPhase {
    Locator,
    Patcher,
    Verifier,
}

impl PromptPhase {
    pub fn as_str(self) -> &'static str {
        match self {
            PromptPhase::Locator => "locator",
            PromptPhase::Patcher => "patcher",
            PromptPhase::Verifier => "verifier",
        }
    }
}

impl fmt::Display for PromptPhase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatTurn {
    pub role: Role,
    #[serde(default)]
    pub content: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub tool_calls: Vec<ToolCall>,
    /// Ids pairing each entry of `tool_calls` with its tool-role reply.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub call_ids: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tool_call_id: Option<String>,
}

impl ChatTurn {
    pub fn new(role: Role, content: impl Into<String>) -> Self {
        Self {
            role,
            content: content.into(),
            tool_calls: Vec::new(),
            call_ids: Vec::new(),
            tool_call_id: None,
        }
    }

    pub fn system(content: impl Into<String>) -> Self {
        Self::new(Role::System, content)
    }

    pub fn user(content: impl Into<String>) -> Self {
        Self::new(Role::User, content)
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        Self::new(Role::Assistant, content)
    }

    pub fn tool_reply(call_id: impl Into<String>, content: impl Into<String>) -> Self {
        Self {
            tool_call_id: Some(call_id.into()),
            ..Self::new(Role::Tool, content)
        }
    }

    /// Id of the `i`-th tool call, synthesized when the backend gave none.
    pub fn call_id(&self, i: usize) -> String {
        self.call_ids.get(i).cloned().unwrap_or_else(|| format!("call_{i}"))
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Usage {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Completion {
    pub turn: ChatTurn,
    /// Absent when the backend does not report token usage.
    pub usage: Option<Usage>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolSchema {
    pub name: ToolName,
    pub description: String,
    pub parameters: Value,
}

pub struct CompletionRequest<'a> {
    pub phase: PromptPhase,
    pub attempt: u32,
    pub history: &'a [ChatTurn],
    pub tools: &'a [ToolSchema],
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum GatewayError {
    #[error("gateway exhausted: {0}")]
    GatewayExhausted(String),
    #[error("malformed tool call: {0}")]
    MalformedToolCall(String),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GatewayConfig {
    pub endpoint: String,
    pub model_name: String,
    pub temperature: f64,
    pub max_turns: usize,
    pub api_key_env: String,
}

impl Default for GatewayConfig {
    fn default() -> Self {
        Self {
            endpoint: "https://api.openai.com/v1".into(),
            model_name: "gpt-4.1".into(),
            temperature: 0.0,
            max_turns: DEFAULT_MAX_TURNS,
            api_key_env: "OPENAI_API_KEY".into(),
        }
    }
}

pub trait Gateway: Send {
    fn complete(&mut self, request: &CompletionRequest<'_>) -> Result<Completion, GatewayError>;
}

impl<G: Gateway + ?Sized> Gateway for Box<G> {
    fn complete(&mut self, request: &CompletionRequest<'_>) -> Result<Completion, GatewayError> {
        (**self).complete(request)
    }
}

pub(crate) fn validate_history(history: &[ChatTurn]) -> Result<(), GatewayError> {
    match history.first() {
        None => Err(GatewayError::InvalidRequest("history is empty".into())),
        Some(t) if t.role != Role::System => {
            Err(GatewayError::InvalidRequest("history must start with a system turn".into()))
        }
        _ => Ok(()),
    }
}

/// Builds a [`ToolCall`] from a tool name and its arguments, given either as
/// a JSON object or as a string holding one.
pub fn parse_tool_call(name: &str, args: &Value) -> Result<ToolCall, GatewayError> {
    let tool = ToolName::parse(name).ok_or_else(|| GatewayError::MalformedToolCall(format!("unknown tool `{name}`")))?;
    let parsed;
    let obj = match args {
        Value::Null => return Ok(ToolCall { name: tool, args: BTreeMap::new() }),
        Value::String(s) if s.trim().is_empty() => return Ok(ToolCall { name: tool, args: BTreeMap::new() }),
        Value::String(s) => {
            parsed = serde_json::from_str::<Value>(s)
                .map_err(|e| GatewayError::MalformedToolCall(format!("{name}: arguments are not JSON: {e}")))?;
            &parsed
        }
        v => v,
    };
    let Value::Object(map) = obj else {
        return Err(GatewayError::MalformedToolCall(format!("{name}: arguments must be an object")));
    };
    let args = map
        .iter()
        .filter(|(_, v)| !v.is_null())
        .map(|(k, v)| {
            let s = match v {
                Value::String(s) => s.clone(),
                other => other.to_string(),
            };
            (k.clone(), s)
        })
        .collect();
    Ok(ToolCall { name: tool, args })
}

fn props(fields: &[(&str, &str, &str)]) -> Value {
    let mut properties = serde_json::Map::new();
    for (name, ty, desc) in fields {
        properties.insert(name.to_string(), json!({"type": ty, "description": desc}));
    }
    Value::Object(properties)
}

/// JSON schemas advertised to the model for the given tools.
pub fn tool_schemas(names: &[ToolName]) -> Vec<ToolSchema> {
    names
        .iter()
        .map(|&name| {
            let (description, fields, required): (&str, Vec<(&str, &str, &str)>, Vec<&str>) = match name {
                ToolName::View => (
                    "Show a file with line numbers, or list a directory to depth 2.",
                    vec![
                        ("path", "string", "path relative to the repository root"),
                        ("start", "integer", "first line to show"),
                        ("end", "integer", "last line to show"),
                    ],
                    vec!["path"],
                ),
                ToolName::Search => (
                    "Regex search over the repository; returns up to 5 matches with context.",
                    vec![("pattern", "string", "regular expression"), ("path", "string", "directory or file to search")],
                    vec!["pattern"],
                ),
                ToolName::Create => (
                    "Create a new file. Fails if the path exists.",
                    vec![("path", "string", "new file path"), ("text", "string", "file content")],
                    vec!["path", "text"],
                ),
                ToolName::StrReplace => (
                    "Replace the unique exact occurrence of `old` with `new` in a file.",
                    vec![
                        ("path", "string", "file to edit"),
                        ("old", "string", "exact text to replace; must occur once"),
                        ("new", "string", "replacement text"),
                    ],
                    vec!["path", "old", "new"],
                ),
                ToolName::Bash => (
                    "Run a command in a persistent shell session.",
                    vec![("command", "string", "shell command"), ("restart", "boolean", "reset the session first")],
                    vec![],
                ),
                ToolName::CheckVul => ("Run the PoC and regression suite on the current state.", vec![], vec![]),
                ToolName::LogCompress => (
                    "Summarize the current attempt into visited ranges, applied hunks and failure log.",
                    vec![("logs", "string", "raw logs to summarize")],
                    vec![],
                ),
                ToolName::IterGrep => (
                    "Rank definition and use sites of a symbol by proximity to the crash stack.",
                    vec![("symbol", "string", "identifier to locate"), ("k", "integer", "number of results")],
                    vec!["symbol"],
                ),
                ToolName::Submit => ("Finish editing and submit the workspace diff.", vec![], vec![]),
            };
            ToolSchema {
                name,
                description: description.to_string(),
                parameters: json!({
                    "type": "object",
                    "properties": props(&fields),
                    "required": required,
                }),
            }
        })
        .collect()
}
