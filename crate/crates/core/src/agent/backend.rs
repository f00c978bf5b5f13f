use std::fmt;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use super::message::{Message, Role, ToolCall, ToolSpec};
use super::session::FileSummary;

pub const DEFAULT_ENDPOINT: &str = "https://openrouter.ai/api/v1/chat/completions";
pub const DEFAULT_MODEL: &str = "gpt-4o-mini";
pub const API_KEY_ENV: &str = "OPENROUTER_API_KEY";

/// Selectable chat models: short name and the provider-qualified id sent
/// on the wire.
pub const MODEL_CHOICES: [(&str, &str); 8] = [
    ("gpt-4o-mini", "openai/gpt-4o-mini"),
    ("gpt-4o", "openai/gpt-4o"),
    ("gpt-5", "openai/gpt-5"),
    ("claude-sonnet-4", "anthropic/claude-sonnet-4"),
    ("grok-3", "x-ai/grok-3"),
    ("grok-4", "x-ai/grok-4"),
    ("gemini-2.5-pro", "google/gemini-2.5-pro"),
    ("gemini-2.5-flash", "google/gemini-2.5-flash"),
];

/// Short names map to their qualified id; anything else passes through.
pub fn wire_model_id(model: &str) -> &str {
    MODEL_CHOICES
        .iter()
        .find(|(short, _)| *short == model)
        .map_or(model, |(_, id)| id)
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BackendError {
    #[error("no API key configured (set it in settings or {API_KEY_ENV})")]
    MissingCredential,
    #[error("backend unreachable: {0}")]
    Unavailable(String),
    #[error("backend returned HTTP {status}: {message}")]
    Http { status: u16, message: String },
    #[error("malformed backend reply: {0}")]
    Protocol(String),
    #[error("scripted backend: {0}")]
    Script(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    /// Forced-choice task classification.
    Route,
    /// Coordinator answering a guidance prompt itself.
    Guidance,
    /// Expert tool loop.
    Expert,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RequestContext {
    pub files: Vec<FileSummary>,
    pub plots: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChatRequest {
    pub agent: String,
    pub stage: Stage,
    pub messages: Vec<Message>,
    pub tools: Vec<ToolSpec>,
    pub context: RequestContext,
}

/// A chat-completions endpoint: one assistant message per request.
pub trait ChatBackend: Send + Sync {
    fn name(&self) -> &str;
    fn complete(&self, request: &ChatRequest) -> Result<Message, BackendError>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    Scripted,
    Openrouter,
}

#[derive(Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendSettings {
    pub backend: BackendKind,
    pub model: String,
    pub endpoint: String,
    #[serde(default, skip_serializing)]
    pub api_key: Option<String>,
}

impl fmt::Debug for BackendSettings {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("BackendSettings")
            .field("backend", &self.backend)
            .field("model", &self.model)
            .field("endpoint", &self.endpoint)
            .field("api_key_set", &self.api_key.is_some())
            .finish()
    }
}

impl Default for BackendSettings {
    fn default() -> Self {
        Self {
            backend: BackendKind::Openrouter,
            model: DEFAULT_MODEL.to_string(),
            endpoint: DEFAULT_ENDPOINT.to_string(),
            api_key: None,
        }
    }
}

/// Settings as shown to clients: the key is reduced to a presence flag.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PublicSettings {
    pub backend: BackendKind,
    pub model: String,
    pub endpoint: String,
    pub api_key_set: bool,
    pub model_choices: Vec<String>,
}

impl BackendSettings {
    /// Key from the settings, else from the environment.
    pub fn resolved_key(&self) -> Option<String> {
        self.api_key
            .clone()
            .or_else(|| std::env::var(API_KEY_ENV).ok())
            .filter(|k| !k.trim().is_empty())
    }

    pub fn public(&self) -> PublicSettings {
        PublicSettings {
            backend: self.backend,
            model: self.model.clone(),
            endpoint: self.endpoint.clone(),
            api_key_set: self.resolved_key().is_some(),
            model_choices: MODEL_CHOICES.iter().map(|(s, _)| s.to_string()).collect(),
        }
    }
}

// ---------------------------------------------------------------------------
// Scripted backend

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScriptedCall {
    pub name: String,
    #[serde(default = "empty_object")]
    pub arguments: Value,
}

fn empty_object() -> Value {
    json!({})
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScriptedReply {
    #[serde(default)]
    pub content: String,
    #[serde(default)]
    pub tool_calls: Vec<ScriptedCall>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScriptedRule {
    /// Agent name the rule applies to; any agent when absent.
    pub agent: Option<String>,
    pub stage: Option<Stage>,
    /// Case-insensitive substring of the first user message.
    pub contains: Option<String>,
    /// Keep replaying the last reply once the list is used up.
    #[serde(default)]
    pub repeat_last: bool,
    #[serde(rename = "reply")]
    pub replies: Vec<ScriptedReply>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default, rename = "rule")]
    pub rules: Vec<ScriptedRule>,
}

/// Replays canned replies chosen by the first matching rule. The reply
/// index is the number of assistant messages already in the request, so a
/// tool loop steps through the list.
///
/// Strings in replies may hold `{tool_name:path}` placeholders, replaced by
/// a field of that tool's latest result (`path` is dot separated; append
/// `|.N` for N decimals or `|.Ne` for scientific notation), or `{file:latest}` / `{file:first}` for uploaded
/// file ids.
#[derive(Debug, Clone)]
pub struct ScriptedBackend {
    scenario: Scenario,
}

const CANONICAL_SCENARIO: &str = include_str!("../../scenarios/canonical.toml");

impl ScriptedBackend {
    pub fn new(scenario: Scenario) -> Self {
        Self { scenario }
    }

    pub fn from_toml(text: &str) -> Result<Self, BackendError> {
        let scenario: Scenario =
            toml::from_str(text).map_err(|e| BackendError::Script(e.to_string()))?;
        for (i, rule) in scenario.rules.iter().enumerate() {
            if rule.replies.is_empty() {
                return Err(BackendError::Script(format!(
                    "rule {} has no replies",
                    i + 1
                )));
            }
        }
        Ok(Self::new(scenario))
    }

    /// Scenario covering guidance, SLD, generation and fitting prompts.
    pub fn canonical() -> Self {
        Self::from_toml(CANONICAL_SCENARIO).expect("bundled scenario parses")
    }

    fn matches(rule: &ScriptedRule, req: &ChatRequest) -> bool {
        let first_user = req
            .messages
            .iter()
            .find(|m| m.role == Role::User)
            .map(|m| m.content.to_lowercase())
            .unwrap_or_default();
        rule.agent.as_deref().is_none_or(|a| a == req.agent)
            && rule.stage.is_none_or(|s| s == req.stage)
            && rule
                .contains
                .as_deref()
                .is_none_or(|c| first_user.contains(&c.to_lowercase()))
    }
}

fn latest_tool_payload(messages: &[Message], tool: &str) -> Option<Value> {
    let mut wanted: Vec<&str> = Vec::new();
    for m in messages {
        for c in &m.tool_calls {
            if c.name == tool {
                wanted.push(&c.id);
            }
        }
    }
    messages
        .iter()
        .rev()
        .find(|m| {
            m.role == Role::Tool
                && m.tool_call_id
                    .as_deref()
                    .is_some_and(|id| wanted.contains(&id))
        })
        .and_then(|m| serde_json::from_str(&m.content).ok())
}

fn lookup(root: &Value, path: &str) -> Option<Value> {
    let mut cur = root;
    for seg in path.split('.').filter(|s| !s.is_empty()) {
        cur = match cur {
            Value::Array(a) => a.get(seg.parse::<usize>().ok()?)?,
            Value::Object(m) => m.get(seg)?,
            _ => return None,
        };
    }
    Some(cur.clone())
}

fn resolve(placeholder: &str, req: &ChatRequest) -> Option<Value> {
    let (source, rest) = placeholder.split_once(':')?;
    if !source
        .chars()
        .all(|c| c.is_ascii_lowercase() || c == '_' || c.is_ascii_digit())
        || source.is_empty()
    {
        return None;
    }
    let (path, format) = match rest.split_once("|.") {
        Some((p, f)) => {
            let (digits, sci) = f.strip_suffix('e').map_or((f, false), |d| (d, true));
            (p, Some((digits.parse::<usize>().ok()?, sci)))
        }
        None => (rest, None),
    };
    let value = if source == "file" {
        let files = &req.context.files;
        let f = match path {
            "latest" => files.last(),
            "first" => files.first(),
            _ => None,
        }?;
        Value::String(f.file_id.clone())
    } else {
        lookup(&latest_tool_payload(&req.messages, source)?, path)?
    };
    Some(match (format, value.as_f64()) {
        (Some((d, false)), Some(x)) => Value::String(format!("{x:.d$}")),
        (Some((d, true)), Some(x)) => Value::String(format!("{x:.d$e}")),
        _ => value,
    })
}

fn render(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

/// Replaces placeholders in `text`; unresolvable ones are left as written.
fn fill(text: &str, req: &ChatRequest) -> String {
    let mut out = String::with_capacity(text.len());
    let mut rest = text;
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let tail = &rest[open..];
        match tail.find('}') {
            Some(close) => {
                let inner = &tail[1..close];
                match resolve(inner, req) {
                    Some(v) => out.push_str(&render(&v)),
                    None => out.push_str(&tail[..=close]),
                }
                rest = &tail[close + 1..];
            }
            None => {
                out.push_str(tail);
                rest = "";
            }
        }
    }
    out.push_str(rest);
    out
}

fn fill_value(v: &Value, req: &ChatRequest) -> Value {
    match v {
        Value::String(s) => {
            // A lone placeholder keeps the resolved value's JSON type.
            if let Some(inner) = s.strip_prefix('{').and_then(|t| t.strip_suffix('}')) {
                if !inner.contains('{') {
                    if let Some(resolved) = resolve(inner, req) {
                        return resolved;
                    }
                }
            }
            Value::String(fill(s, req))
        }
        Value::Array(a) => Value::Array(a.iter().map(|x| fill_value(x, req)).collect()),
        Value::Object(m) => Value::Object(
            m.iter()
                .map(|(k, x)| (k.clone(), fill_value(x, req)))
                .collect(),
        ),
        other => other.clone(),
    }
}

impl ChatBackend for ScriptedBackend {
    fn name(&self) -> &str {
        "scripted"
    }

    fn complete(&self, req: &ChatRequest) -> Result<Message, BackendError> {
        let (index, rule) = self
            .scenario
            .rules
            .iter()
            .enumerate()
            .find(|(_, r)| Self::matches(r, req))
            .ok_or_else(|| {
                BackendError::Script(format!("no rule matches agent '{}'", req.agent))
            })?;
        let step = req
            .messages
            .iter()
            .filter(|m| m.role == Role::Assistant)
            .count();
        let reply = match rule.replies.get(step) {
            Some(r) => r,
            None if rule.repeat_last => rule.replies.last().expect("rules have replies"),
            None => {
                return Err(BackendError::Script(format!(
                    "rule {} has no reply for step {}",
                    index + 1,
                    step + 1
                )))
            }
        };
        let calls = reply
            .tool_calls
            .iter()
            .enumerate()
            .map(|(j, c)| ToolCall {
                id: format!("call-{}-{}", step + 1, j + 1),
                name: c.name.clone(),
                arguments: fill_value(&c.arguments, req),
            })
            .collect();
        Ok(Message::assistant_calls(fill(&reply.content, req), calls))
    }
}

// ---------------------------------------------------------------------------
// OpenAI-compatible HTTP backend

/// Chat-completions client (OpenRouter by default).
pub struct OpenRouterBackend {
    endpoint: String,
    model: String,
    api_key: String,
    http: ureq::Agent,
}

impl fmt::Debug for OpenRouterBackend {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("OpenRouterBackend")
            .field("endpoint", &self.endpoint)
            .field("model", &self.model)
            .finish_non_exhaustive()
    }
}

const REQUEST_TIMEOUT: Duration = Duration::from_secs(120);
const ERROR_BODY_CHARS: usize = 300;

impl OpenRouterBackend {
    pub fn new(settings: &BackendSettings) -> Result<Self, BackendError> {
        let api_key = settings
            .resolved_key()
            .ok_or(BackendError::MissingCredential)?;
        let config = ureq::Agent::config_builder()
            .timeout_global(Some(REQUEST_TIMEOUT))
            .http_status_as_error(false)
            .build();
        Ok(Self {
            endpoint: settings.endpoint.clone(),
            model: settings.model.clone(),
            api_key,
            http: config.into(),
        })
    }

    fn redact(&self, text: &str) -> String {
        text.replace(&self.api_key, "[redacted]")
    }

    pub fn request_body(&self, req: &ChatRequest) -> Value {
        let messages: Vec<Value> = req.messages.iter().map(wire_message).collect();
        let mut body = json!({
            "model": wire_model_id(&self.model),
            "messages": messages,
        });
        if !req.tools.is_empty() {
            body["tools"] = req
                .tools
                .iter()
                .map(|t| {
                    json!({
                        "type": "function",
                        "function": {
                            "name": t.name,
                            "description": t.description,
                            "parameters": t.json_schema(),
                        }
                    })
                })
                .collect();
        }
        body
    }
}

fn wire_message(m: &Message) -> Value {
    let role = match m.role {
        Role::System => "system",
        Role::User => "user",
        Role::Assistant => "assistant",
        Role::Tool => "tool",
    };
    let mut v = json!({ "role": role, "content": m.content });
    if !m.tool_calls.is_empty() {
        if m.content.is_empty() {
            v["content"] = Value::Null;
        }
        v["tool_calls"] = m
            .tool_calls
            .iter()
            .map(|c| {
                json!({
                    "id": c.id,
                    "type": "function",
                    "function": { "name": c.name, "arguments": c.arguments.to_string() },
                })
            })
            .collect();
    }
    if let Some(id) = &m.tool_call_id {
        v["tool_call_id"] = Value::String(id.clone());
    }
    v
}

/// Reads `choices[0].message` of a chat-completions response.
pub fn parse_completion(body: &Value) -> Result<Message, BackendError> {
    let msg = body
        .pointer("/choices/0/message")
        .ok_or_else(|| BackendError::Protocol("no choices[0].message".into()))?;
    let content = msg
        .get("content")
        .and_then(Value::as_str)
        .unwrap_or_default()
        .to_string();
    let mut calls = Vec::new();
    if let Some(list) = msg.get("tool_calls").and_then(Value::as_array) {
        for (i, c) in list.iter().enumerate() {
            let name = c
                .pointer("/function/name")
                .and_then(Value::as_str)
                .ok_or_else(|| {
                    BackendError::Protocol(format!("tool_calls[{i}] has no function name"))
                })?;
            let id = c
                .get("id")
                .and_then(Value::as_str)
                .map_or_else(|| format!("call-{}", i + 1), str::to_string);
            // Arguments arrive as a JSON string; an unparsable string is kept
            // verbatim and fails schema validation downstream.
            let arguments = match c.pointer("/function/arguments") {
                Some(Value::String(s)) if s.trim().is_empty() => json!({}),
                Some(Value::String(s)) => {
                    serde_json::from_str(s).unwrap_or_else(|_| Value::String(s.clone()))
                }
                Some(other) => other.clone(),
                None => json!({}),
            };
            calls.push(ToolCall {
                id,
                name: name.to_string(),
                arguments,
            });
        }
    }
    Ok(Message::assistant_calls(content, calls))
}

impl ChatBackend for OpenRouterBackend {
    fn name(&self) -> &str {
        "openrouter"
    }

    fn complete(&self, req: &ChatRequest) -> Result<Message, BackendError> {
        let body = self.request_body(req);
        let mut resp = self
            .http
            .post(&self.endpoint)
            .header("Authorization", &format!("Bearer {}", self.api_key))
            .header("X-Title", "saskit")
            .send_json(&body)
            .map_err(|e| BackendError::Unavailable(self.redact(&e.to_string())))?;
        let status = resp.status().as_u16();
        let text = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| BackendError::Unavailable(self.redact(&e.to_string())))?;
        if status != 200 {
            let message: String = self.redact(&text).chars().take(ERROR_BODY_CHARS).collect();
            return Err(BackendError::Http { status, message });
        }
        let json: Value = serde_json::from_str(&text)
            .map_err(|e| BackendError::Protocol(format!("response is not JSON: {e}")))?;
        parse_completion(&json)
    }
}
