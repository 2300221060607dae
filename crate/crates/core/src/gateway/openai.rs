//! OpenAI-compatible chat-completions backend.

use std::thread;
use std::time::Duration;

use serde_json::{json, Value};

use super::{
    parse_tool_call, validate_history, ChatTurn, Completion, CompletionRequest, Gateway, GatewayConfig, GatewayError,
    Role, Usage,
};

const ATTEMPTS: u32 = 3;

pub struct OpenAiGateway {
    config: GatewayConfig,
    client: reqwest::blocking::Client,
    api_key: Option<String>,
    backoff: Duration,
}

impl OpenAiGateway {
    pub fn new(config: GatewayConfig, timeout: Duration) -> Result<Self, GatewayError> {
        if !(config.temperature >= 0.0) {
            return Err(GatewayError::InvalidRequest("temperature must be >= 0".into()));
        }
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| GatewayError::InvalidRequest(e.to_string()))?;
        let api_key = std::env::var(&config.api_key_env).ok().filter(|k| !k.is_empty());
        Ok(Self {
            config,
            client,
            api_key,
            backoff: Duration::from_millis(500),
        })
    }

    /// Base delay before the first retry; doubled on each further retry.
    pub fn with_backoff(mut self, backoff: Duration) -> Self {
        self.backoff = backoff;
        self
    }

    fn url(&self) -> String {
        let base = self.config.endpoint.trim_end_matches('/');
        if base.ends_with("/chat/completions") {
            base.to_string()
        } else {
            format!("{base}/chat/completions")
        }
    }

    pub fn request_body(&self, request: &CompletionRequest<'_>) -> Value {
        let messages: Vec<Value> = request.history.iter().map(message_json).collect();
        let mut body = json!({
            "model": self.config.model_name,
            "temperature": self.config.temperature,
            "messages": messages,
        });
        if !request.tools.is_empty() {
            body["tools"] = request
                .tools
                .iter()
                .map(|t| {
                    json!({
                        "type": "function",
                        "function": {
                            "name": t.name.as_str(),
                            "description": t.description,
                            "parameters": t.parameters,
                        }
                    })
                })
                .collect();
        }
        body
    }

    fn send_once(&self, body: &Value) -> Result<Value, (bool, String)> {
        let mut req = self.client.post(self.url()).json(body);
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(|e| (true, format!("transport: {e}")))?;
        let status = resp.status();
        let text = resp.text().map_err(|e| (true, format!("reading body: {e}")))?;
        if !status.is_success() {
            let retry = status.is_server_error() || status.as_u16() == 429;
            return Err((retry, format!("HTTP {status}: {}", crate::workspace::truncate_middle(&text, 500))));
        }
        serde_json::from_str(&text).map_err(|e| (false, format!("response is not JSON: {e}")))
    }
}

fn message_json(turn: &ChatTurn) -> Value {
    let role = match turn.role {
        Role::System => "system",
        Role::User => "user",
        Role::Assistant => "assistant",
        Role::Tool => "tool",
    };
    let mut m = json!({"role": role, "content": turn.content});
    if turn.role == Role::Assistant && !turn.tool_calls.is_empty() {
        m["tool_calls"] = turn
            .tool_calls
            .iter()
            .enumerate()
            .map(|(i, c)| {
                json!({
                    "id": turn.call_id(i),
                    "type": "function",
                    "function": {
                        "name": c.name.as_str(),
                        "arguments": serde_json::to_string(&c.args).unwrap_or_default(),
                    }
                })
            })
            .collect();
    }
    if let Some(id) = &turn.tool_call_id {
        m["tool_call_id"] = json!(id);
    }
    m
}

/// Extracts the assistant turn and token usage from a response body.
pub(crate) fn parse_response(v: &Value) -> Result<Completion, GatewayError> {
    let msg = v
        .pointer("/choices/0/message")
        .ok_or_else(|| GatewayError::GatewayExhausted(format!("response without choices: {v}")))?;
    let content = msg.get("content").and_then(Value::as_str).unwrap_or("").to_string();
    let mut tool_calls = Vec::new();
    let mut call_ids = Vec::new();
    if let Some(calls) = msg.get("tool_calls").and_then(Value::as_array) {
        for (i, c) in calls.iter().enumerate() {
            let name = c.pointer("/function/name").and_then(Value::as_str).unwrap_or("");
            let args = c.pointer("/function/arguments").unwrap_or(&Value::Null);
            tool_calls.push(parse_tool_call(name, args)?);
            call_ids.push(c.get("id").and_then(Value::as_str).map(String::from).unwrap_or_else(|| format!("call_{i}")));
        }
    }
    let usage = v.get("usage").map(|u| Usage {
        prompt_tokens: u.get("prompt_tokens").and_then(Value::as_u64).unwrap_or(0),
        completion_tokens: u.get("completion_tokens").and_then(Value::as_u64).unwrap_or(0),
    });
    Ok(Completion {
        turn: ChatTurn {
            role: Role::Assistant,
            content,
            tool_calls,
            call_ids,
            tool_call_id: None,
        },
        usage,
    })
}

impl Gateway for OpenAiGateway {
    fn complete(&mut self, request: &CompletionRequest<'_>) -> Result<Completion, GatewayError> {
        validate_history(request.history)?;
        let body = self.request_body(request);
        let mut last = String::new();
        for attempt in 0..ATTEMPTS {
            if attempt > 0 {
                thread::sleep(self.backoff * 2u32.pow(attempt - 1));
            }
            match self.send_once(&body) {
                Ok(v) => return parse_response(&v),
                Err((retry, msg)) => {
                    log::warn!("gateway request failed (attempt {}): {msg}", attempt + 1);
                    last = msg;
                    if !retry {
                        break;
                    }
                }
            }
        }
        Err(GatewayError::GatewayExhausted(last))
    }
}
