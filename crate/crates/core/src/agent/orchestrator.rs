use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use super::backend::{BackendError, ChatBackend, ChatRequest, RequestContext, Stage};
use super::message::{Message, Role};
use super::profiles::{AgentProfile, Task, COORDINATOR, GUIDANCE_PROMPT, ROUTER_PROMPT};
use super::session::SessionState;
use super::tools::{execute_tool, Toolbox};
use crate::docstore::tokenize;

const LOG_DETAIL_CHARS: usize = 240;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RouteSource {
    Backend,
    Keyword,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RouteDecision {
    pub task: Task,
    pub rationale: String,
    pub source: RouteSource,
    /// Set when a fit was requested without any uploaded file.
    #[serde(default)]
    pub needs_upload: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub call_id: String,
    pub tool: String,
    pub arguments: Value,
    pub ok: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentReply {
    pub task: Task,
    pub agent: String,
    pub final_text: String,
    pub plot_ids: Vec<String>,
    pub tool_trace: Vec<TraceEntry>,
    /// The tool loop hit its round limit before a final answer.
    pub iteration_limit: bool,
    /// Backend failure that cut the turn short.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TurnError {
    #[error("message is empty")]
    EmptyMessage,
    #[error("a turn is already running in this session")]
    Busy,
}

fn clip(text: &str, n: usize) -> String {
    let mut s: String = text.chars().take(n).collect();
    if text.chars().nth(n).is_some() {
        s.push('…');
    }
    s.replace('\n', " ")
}

const FIT_WORDS: [&str; 9] = [
    "fit",
    "fits",
    "fitting",
    "fitted",
    "refit",
    "analyze",
    "analyse",
    "analysis",
    "regression",
];
const GENERATE_WORDS: [&str; 9] = [
    "generate",
    "generating",
    "generation",
    "plot",
    "simulate",
    "simulated",
    "synthetic",
    "curve",
    "intensity",
];

/// Keyword routing. A fit request beats everything else; without an
/// uploaded file it becomes guidance asking for one.
pub fn route_by_keywords(
    text: &str,
    session: &SessionState,
    model_names: &[String],
) -> RouteDecision {
    let lower = text.to_lowercase();
    let words = tokenize(text);
    let has = |list: &[&str]| words.iter().any(|w| list.contains(&w.as_str()));
    let decision = |task, rationale: &str, needs_upload| RouteDecision {
        task,
        rationale: rationale.to_string(),
        source: RouteSource::Keyword,
        needs_upload,
    };
    if has(&FIT_WORDS) {
        return if session.has_files() {
            decision(Task::Fit, "fit request with uploaded data", false)
        } else {
            decision(Task::Guidance, "fit request without uploaded data", true)
        };
    }
    if words.iter().any(|w| w == "sld" || w == "slds")
        || lower.contains("scattering length density")
    {
        return decision(Task::Sld, "mentions scattering length density", false);
    }
    if has(&GENERATE_WORDS) || words.iter().any(|w| model_names.contains(w)) {
        return decision(Task::Generate, "mentions data generation or a model", false);
    }
    decision(Task::Guidance, "no task keywords", false)
}

fn parse_label(reply: &str) -> Option<Task> {
    tokenize(reply).iter().find_map(|w| Task::from_label(w))
}

/// Classifies a prompt with one backend call, falling back to keywords
/// when the backend fails or answers with no label.
pub fn route(
    text: &str,
    session: &SessionState,
    backend: &dyn ChatBackend,
    tb: &Toolbox,
) -> RouteDecision {
    let request = ChatRequest {
        agent: COORDINATOR.to_string(),
        stage: Stage::Route,
        messages: vec![Message::system(ROUTER_PROMPT), Message::user(text)],
        tools: Vec::new(),
        context: context(session),
    };
    session.log(format!(
        "[{COORDINATOR}] backend request to {} (route, tools: none)",
        backend.name()
    ));
    let names: Vec<String> = tb.registry.names().map(str::to_string).collect();
    let mut decision = match backend.complete(&request) {
        Ok(reply) => match parse_label(&reply.content) {
            Some(task) => RouteDecision {
                task,
                rationale: format!("backend label '{}'", clip(reply.content.trim(), 40)),
                source: RouteSource::Backend,
                needs_upload: false,
            },
            None => {
                session.log(format!(
                    "[{COORDINATOR}] unparsable route reply '{}', using keywords",
                    clip(&reply.content, 80)
                ));
                route_by_keywords(text, session, &names)
            }
        },
        Err(e) => {
            session.log(format!(
                "[{COORDINATOR}] route backend unavailable ({e}), using keywords"
            ));
            route_by_keywords(text, session, &names)
        }
    };
    if decision.task == Task::Fit && !session.has_files() {
        decision = RouteDecision {
            task: Task::Guidance,
            rationale: format!("{}; no uploaded file", decision.rationale),
            source: decision.source,
            needs_upload: true,
        };
    }
    session.log(format!(
        "[{COORDINATOR}] route -> {} ({})",
        decision.task.label(),
        decision.rationale
    ));
    decision
}

fn context(session: &SessionState) -> RequestContext {
    RequestContext {
        files: session.files(),
        plots: session.plot_ids(),
    }
}

fn inventory(ctx: &RequestContext) -> String {
    let mut s = String::from("Session inventory.\nUploaded files:");
    if ctx.files.is_empty() {
        s.push_str(" none");
    }
    for f in &ctx.files {
        let _ = write!(
            s,
            "\n- file_id {} ({}, {} points, q {:.4e} to {:.4e} 1/Å)",
            f.file_id, f.name, f.points, f.q_range.0, f.q_range.1
        );
    }
    let _ = write!(
        s,
        "\nPlots: {}",
        if ctx.plots.is_empty() {
            "none".into()
        } else {
            ctx.plots.join(", ")
        }
    );
    s
}

/// Built-in capability summary used when the backend gives no guidance.
pub fn guidance_text(tb: &Toolbox) -> String {
    let models = tb.registry.names().collect::<Vec<_>>().join(", ");
    format!(
        "I am a small-angle scattering assistant with three capabilities:\n\
         1. SLD calculation: neutron (real and imaginary) and X-ray scattering length densities \
         from a chemical formula and density. Example: \"Calculate the SLD of D2O at 1.1044 g/cm3\".\n\
         2. Data generation: model I(q) curves ({models}) over a chosen q range, plotted for you. \
         Example: \"Generate a lamellar curve with thickness 50 Å for q from 0.01 to 1\".\n\
         3. Data fitting: fit a model to your uploaded data and report fitted parameters, reduced chi2 \
         and normalized residuals. Example: \"Fit my uploaded data with the sphere model, the solvent is heavy water\"."
    )
}

pub const UPLOAD_REQUEST: &str = "To fit data, please upload a data file first (columns q, I and optionally dI), then ask again.";

fn guidance(text: &str, session: &SessionState, backend: &dyn ChatBackend, tb: &Toolbox) -> String {
    let request = ChatRequest {
        agent: COORDINATOR.to_string(),
        stage: Stage::Guidance,
        messages: vec![Message::system(GUIDANCE_PROMPT), Message::user(text)],
        tools: Vec::new(),
        context: context(session),
    };
    session.log(format!(
        "[{COORDINATOR}] backend request to {} (guidance, tools: none)",
        backend.name()
    ));
    match backend.complete(&request) {
        Ok(reply) if !reply.content.trim().is_empty() => reply.content,
        Ok(_) => {
            session.log(format!(
                "[{COORDINATOR}] empty guidance reply, using built-in text"
            ));
            guidance_text(tb)
        }
        Err(e) => {
            session.log(format!(
                "[{COORDINATOR}] guidance backend unavailable ({e}), using built-in text"
            ));
            guidance_text(tb)
        }
    }
}

/// Tool-call loop of one expert agent. Only the system prompt, the session
/// inventory and the task message are sent; not the whole transcript.
pub fn run_agent(
    profile: &AgentProfile,
    task: Task,
    task_message: &str,
    session: &SessionState,
    backend: &dyn ChatBackend,
    tb: &Toolbox,
) -> Result<AgentReply, BackendError> {
    let agent = profile.name.as_str();
    let ctx = context(session);
    let mut messages = vec![
        Message::system(&profile.system_prompt),
        Message::system(inventory(&ctx)),
        Message::user(task_message),
    ];
    let tool_list = profile.tool_names().join(", ");
    let mut trace = Vec::new();
    let mut plot_ids = Vec::new();

    for round in 1..=profile.max_tool_iterations {
        session.log(format!(
            "[{agent}] backend request {round} to {} ({} messages, tools: {tool_list})",
            backend.name(),
            messages.len()
        ));
        let request = ChatRequest {
            agent: agent.to_string(),
            stage: Stage::Expert,
            messages: messages.clone(),
            tools: profile.tools.clone(),
            context: context(session),
        };
        let reply = backend.complete(&request).inspect_err(|e| {
            session.log(format!("[{agent}] backend error (tools: {tool_list}): {e}"));
        })?;
        let calls = reply.tool_calls.clone();
        messages.push(reply);
        if calls.is_empty() {
            let final_text = messages
                .last()
                .map(|m| m.content.clone())
                .unwrap_or_default();
            session.log(format!(
                "[{agent}] final reply after {} tool calls",
                trace.len()
            ));
            return Ok(AgentReply {
                task,
                agent: agent.to_string(),
                final_text,
                plot_ids,
                tool_trace: trace,
                iteration_limit: false,
                failure: None,
            });
        }
        for call in &calls {
            session.log(format!(
                "[{agent}] {} call {}: {}",
                call.name,
                call.id,
                clip(&call.arguments.to_string(), LOG_DETAIL_CHARS)
            ));
            let result = execute_tool(call, &profile.tools, session, tb);
            match result.error_text() {
                None => session.log(format!(
                    "[{agent}] {} result {}: ok {}",
                    call.name,
                    call.id,
                    clip(&result.payload.to_string(), LOG_DETAIL_CHARS)
                )),
                Some(err) => session.log(format!(
                    "[{agent}] {} result {}: error: {err}",
                    call.name, call.id
                )),
            }
            if let Some(id) = result.payload.get("plot_id").and_then(Value::as_str) {
                plot_ids.push(id.to_string());
            }
            trace.push(TraceEntry {
                call_id: call.id.clone(),
                tool: call.name.clone(),
                arguments: call.arguments.clone(),
                ok: result.ok,
                error: result.error_text().map(str::to_string),
            });
            messages.push(Message::tool(&result));
        }
    }

    let last_text = messages
        .iter()
        .rev()
        .find(|m| m.role == Role::Assistant && !m.content.trim().is_empty())
        .map(|m| m.content.clone())
        .unwrap_or_default();
    let note = format!(
        "[iteration limit: stopped after {} tool rounds without a final answer]",
        profile.max_tool_iterations
    );
    session.log(format!("[{agent}] {note} (tools: {tool_list})"));
    let final_text = if last_text.is_empty() {
        note
    } else {
        format!("{last_text}\n\n{note}")
    };
    Ok(AgentReply {
        task,
        agent: agent.to_string(),
        final_text,
        plot_ids,
        tool_trace: trace,
        iteration_limit: true,
        failure: None,
    })
}

/// Routes one user message, runs the chosen agent and records both sides
/// in the transcript. At most one turn runs per session.
pub fn handle_user_turn(
    text: &str,
    session: &SessionState,
    backend: &dyn ChatBackend,
    tb: &Toolbox,
) -> Result<AgentReply, TurnError> {
    if text.trim().is_empty() {
        return Err(TurnError::EmptyMessage);
    }
    let _turn = session.try_begin_turn().ok_or(TurnError::Busy)?;
    session.touch();
    session.push_message(Message::user(text));
    session.log(format!(
        "[{COORDINATOR}] user message: {}",
        clip(text, LOG_DETAIL_CHARS)
    ));

    let decision = route(text, session, backend, tb);
    let reply = match decision.task {
        Task::Guidance => {
            let final_text = if decision.needs_upload {
                format!("{UPLOAD_REQUEST}\n\n{}", guidance_text(tb))
            } else {
                guidance(text, session, backend, tb)
            };
            AgentReply {
                task: Task::Guidance,
                agent: COORDINATOR.to_string(),
                final_text,
                plot_ids: Vec::new(),
                tool_trace: Vec::new(),
                iteration_limit: false,
                failure: None,
            }
        }
        task => {
            let profile = AgentProfile::for_task(task);
            match run_agent(&profile, task, text, session, backend, tb) {
                Ok(r) => r,
                Err(e) => AgentReply {
                    task,
                    agent: profile.name.clone(),
                    final_text: format!(
                        "The {} agent could not get a reply from the language model: {e}",
                        profile.name
                    ),
                    plot_ids: Vec::new(),
                    tool_trace: Vec::new(),
                    iteration_limit: false,
                    failure: Some(e.to_string()),
                },
            }
        }
    };
    session.push_message(Message::assistant(&reply.final_text));
    session.touch();
    Ok(reply)
}
