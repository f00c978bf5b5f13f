//! Coordinator and expert agents driving the numeric tools through a
//! chat-completions backend.
//!
//! A turn is routed to one of four tasks. Guidance is answered by the
//! coordinator; SLD, generation and fitting each run an expert agent whose
//! tool calls are schema-checked, executed, and fed back until the model
//! answers without calling a tool or the round limit is reached.

mod backend;
mod message;
mod orchestrator;
mod profiles;
mod session;
mod tools;

pub use backend::{
    parse_completion, wire_model_id, BackendError, BackendKind, BackendSettings, ChatBackend,
    ChatRequest, OpenRouterBackend, PublicSettings, RequestContext, Scenario, ScriptedBackend,
    ScriptedCall, ScriptedReply, ScriptedRule, Stage, API_KEY_ENV, DEFAULT_ENDPOINT, DEFAULT_MODEL,
    MODEL_CHOICES,
};
pub use message::{FieldKind, FieldSpec, Message, Role, ToolCall, ToolResult, ToolSpec};
pub use orchestrator::{
    guidance_text, handle_user_turn, route, route_by_keywords, run_agent, AgentReply,
    RouteDecision, RouteSource, TraceEntry, TurnError, UPLOAD_REQUEST,
};
pub use profiles::{AgentProfile, Task, COORDINATOR, MAX_TOOL_ITERATIONS};
pub use session::{FileSummary, SessionSnapshot, SessionState, StoredFile, TurnGuard};
pub use tools::{
    execute_tool, tool_spec, tool_specs, Toolbox, TOOL_FIT, TOOL_GENERATE, TOOL_LIST_MODELS,
    TOOL_MODEL_DOC, TOOL_SEARCH_DOCS, TOOL_SLD,
};
