use std::sync::Arc;

use axum::extract::rejection::{JsonRejection, QueryRejection};
use axum::extract::{Multipart, Path, Query, State};
use axum::http::{StatusCode, Uri};
use axum::response::Html;
use axum::Json;
use saskit_core::agent::{
    handle_user_turn, AgentReply, BackendError, BackendKind, ChatBackend, ChatRequest, FileSummary,
    Message, OpenRouterBackend, PublicSettings, SessionState, TraceEntry, TurnError,
};
use saskit_core::dataio::load_ascii_named;
use saskit_core::models::ModelInfo;
use saskit_core::PlotArtifact;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::{ApiError, ApiResult};
use crate::{AppState, INDEX_HTML};

type AppStateRef = State<Arc<AppState>>;

fn json_body<T>(payload: Result<Json<T>, JsonRejection>) -> ApiResult<T> {
    payload
        .map(|Json(v)| v)
        .map_err(|e| ApiError::bad_request(e.body_text()))
}

fn query<T>(q: Result<Query<T>, QueryRejection>) -> ApiResult<T> {
    q.map(|Query(v)| v)
        .map_err(|e| ApiError::bad_request(e.body_text()))
}

fn session(state: &AppState, id: &str) -> ApiResult<Arc<SessionState>> {
    state
        .sessions
        .get(id)
        .ok_or_else(|| ApiError::unknown_session(id))
}

pub async fn index() -> Html<&'static str> {
    Html(INDEX_HTML)
}

pub async fn not_found(uri: Uri) -> ApiError {
    ApiError::new(
        StatusCode::NOT_FOUND,
        "NotFound",
        format!("no route for {}", uri.path()),
    )
}

pub async fn method_not_allowed(uri: Uri) -> ApiError {
    ApiError::new(
        StatusCode::METHOD_NOT_ALLOWED,
        "MethodNotAllowed",
        format!("method not allowed on {}", uri.path()),
    )
}

#[derive(Debug, Serialize)]
pub struct SessionCreated {
    session_id: String,
}

pub async fn create_session(State(state): AppStateRef) -> Json<SessionCreated> {
    let s = state.sessions.create();
    Json(SessionCreated {
        session_id: s.id().to_string(),
    })
}

#[derive(Debug, Serialize)]
pub struct SessionView {
    session_id: String,
    busy: bool,
    transcript: Vec<Message>,
    files: Vec<FileSummary>,
    plot_ids: Vec<String>,
    log_cursor: usize,
}

pub async fn get_session(
    State(state): AppStateRef,
    Path(id): Path<String>,
) -> ApiResult<Json<SessionView>> {
    let s = session(&state, &id)?;
    Ok(Json(SessionView {
        session_id: s.id().to_string(),
        busy: s.is_busy(),
        transcript: s.transcript(),
        files: s.files(),
        plot_ids: s.plot_ids(),
        log_cursor: s.log_len(),
    }))
}

#[derive(Debug, Deserialize)]
pub struct ChatBody {
    session_id: String,
    text: String,
}

#[derive(Debug, Serialize)]
pub struct ChatResponse {
    reply_text: String,
    plot_ids: Vec<String>,
    log_cursor: usize,
    task: String,
    agent: String,
    tool_trace: Vec<TraceEntry>,
    iteration_limit: bool,
}

/// Stands in for the HTTP backend when it cannot be constructed, so the
/// turn still runs and reports the problem.
struct Unconfigured(BackendError);

impl ChatBackend for Unconfigured {
    fn name(&self) -> &str {
        "unconfigured"
    }

    fn complete(&self, _request: &ChatRequest) -> Result<Message, BackendError> {
        Err(self.0.clone())
    }
}

fn current_backend(state: &AppState) -> Arc<dyn ChatBackend> {
    let settings = state
        .settings
        .read()
        .unwrap_or_else(|e| e.into_inner())
        .clone();
    match settings.backend {
        BackendKind::Scripted => state.scripted.clone(),
        BackendKind::Openrouter => match OpenRouterBackend::new(&settings) {
            Ok(b) => Arc::new(b),
            Err(e) => Arc::new(Unconfigured(e)),
        },
    }
}

pub async fn chat(
    State(state): AppStateRef,
    payload: Result<Json<ChatBody>, JsonRejection>,
) -> ApiResult<Json<ChatResponse>> {
    let body = json_body(payload)?;
    let s = session(&state, &body.session_id)?;
    if s.is_busy() {
        return Err(busy());
    }
    let backend = current_backend(&state);
    let toolbox = state.toolbox.clone();
    let turn_session = Arc::clone(&s);
    let result = tokio::task::spawn_blocking(move || {
        handle_user_turn(&body.text, &turn_session, backend.as_ref(), &toolbox)
    })
    .await
    .map_err(|e| {
        ApiError::new(
            StatusCode::INTERNAL_SERVER_ERROR,
            "TurnPanicked",
            e.to_string(),
        )
    })?;
    state.sessions.persist(&s);
    let reply: AgentReply = match result {
        Ok(r) => r,
        Err(TurnError::EmptyMessage) => {
            return Err(ApiError::new(
                StatusCode::BAD_REQUEST,
                "EmptyMessage",
                "message is empty",
            ))
        }
        Err(TurnError::Busy) => return Err(busy()),
    };
    let response = ChatResponse {
        reply_text: reply.final_text,
        plot_ids: reply.plot_ids,
        log_cursor: s.log_len(),
        task: reply.task.label().to_string(),
        agent: reply.agent,
        tool_trace: reply.tool_trace,
        iteration_limit: reply.iteration_limit,
    };
    match reply.failure {
        None => Ok(Json(response)),
        Some(diagnostic) => {
            Err(
                ApiError::new(StatusCode::BAD_GATEWAY, "BackendFailure", diagnostic).with_extra(
                    json!({ "reply_text": response.reply_text, "log_cursor": response.log_cursor }),
                ),
            )
        }
    }
}

fn busy() -> ApiError {
    ApiError::new(
        StatusCode::CONFLICT,
        "Busy",
        "a turn is already running in this session",
    )
}

#[derive(Debug, Default, Deserialize)]
pub struct SessionQuery {
    session_id: Option<String>,
    #[serde(default)]
    cursor: usize,
}

fn required_session(state: &AppState, q: &SessionQuery) -> ApiResult<Arc<SessionState>> {
    let id = q
        .session_id
        .as_deref()
        .ok_or_else(|| ApiError::bad_request("session_id is required"))?;
    session(state, id)
}

pub async fn upload(
    State(state): AppStateRef,
    q: Result<Query<SessionQuery>, QueryRejection>,
    mut multipart: Multipart,
) -> ApiResult<Json<FileSummary>> {
    let mut q = query(q)?;
    let mut file: Option<(String, Vec<u8>)> = None;
    loop {
        let field = match multipart.next_field().await {
            Ok(Some(f)) => f,
            Ok(None) => break,
            Err(e) => return Err(multipart_error(e)),
        };
        match field.name().unwrap_or("") {
            "session_id" => q.session_id = Some(field.text().await.map_err(multipart_error)?),
            "file" => {
                let name = field.file_name().unwrap_or("upload.dat").to_string();
                let bytes = field.bytes().await.map_err(multipart_error)?;
                file = Some((name, bytes.to_vec()));
            }
            _ => {
                field.bytes().await.map_err(multipart_error)?;
            }
        }
    }
    let s = required_session(&state, &q)?;
    let (name, bytes) =
        file.ok_or_else(|| ApiError::bad_request("multipart field 'file' is missing"))?;
    let text = String::from_utf8_lossy(&bytes);
    let parsed = load_ascii_named(&text, Some(&name)).map_err(|e| {
        s.log(format!("[service] upload {name} rejected: {e}"));
        ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, e.code(), e.to_string())
    })?;
    let summary = s.add_file(&name, parsed.dataset, parsed.warnings);
    s.touch();
    s.log(format!(
        "[service] uploaded {name} as {}: {} points, q {:.4e} to {:.4e}",
        summary.file_id, summary.points, summary.q_range.0, summary.q_range.1
    ));
    state.sessions.persist(&s);
    Ok(Json(summary))
}

fn multipart_error(e: axum::extract::multipart::MultipartError) -> ApiError {
    let status = e.status();
    if status == StatusCode::PAYLOAD_TOO_LARGE {
        ApiError::new(status, "PayloadTooLarge", "upload exceeds the size limit")
    } else {
        ApiError::new(status, "InvalidMultipart", e.body_text())
    }
}

pub async fn get_plot(
    State(state): AppStateRef,
    Path(id): Path<String>,
) -> ApiResult<Json<PlotArtifact>> {
    state.sessions.find_plot(&id).map(Json).ok_or_else(|| {
        ApiError::new(
            StatusCode::NOT_FOUND,
            "UnknownPlot",
            format!("no plot '{id}'"),
        )
    })
}

#[derive(Debug, Serialize)]
pub struct LogsResponse {
    lines: Vec<String>,
    cursor: usize,
}

pub async fn get_logs(
    State(state): AppStateRef,
    q: Result<Query<SessionQuery>, QueryRejection>,
) -> ApiResult<Json<LogsResponse>> {
    let q = query(q)?;
    let s = required_session(&state, &q)?;
    let (lines, cursor) = s.logs_since(q.cursor);
    Ok(Json(LogsResponse { lines, cursor }))
}

pub async fn get_files(
    State(state): AppStateRef,
    q: Result<Query<SessionQuery>, QueryRejection>,
) -> ApiResult<Json<Vec<FileSummary>>> {
    let q = query(q)?;
    Ok(Json(required_session(&state, &q)?.files()))
}

pub async fn get_models(State(state): AppStateRef) -> Json<Vec<ModelInfo>> {
    Json(
        state
            .toolbox
            .registry
            .list_models()
            .into_iter()
            .cloned()
            .collect(),
    )
}

pub async fn get_settings(State(state): AppStateRef) -> Json<PublicSettings> {
    Json(
        state
            .settings
            .read()
            .unwrap_or_else(|e| e.into_inner())
            .public(),
    )
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SettingsUpdate {
    backend: Option<BackendKind>,
    model: Option<String>,
    endpoint: Option<String>,
    /// Empty string clears the stored key.
    api_key: Option<String>,
}

pub async fn put_settings(
    State(state): AppStateRef,
    payload: Result<Json<SettingsUpdate>, JsonRejection>,
) -> ApiResult<Json<PublicSettings>> {
    let update = json_body(payload)?;
    if update.model.as_deref().is_some_and(|m| m.trim().is_empty()) {
        return Err(ApiError::bad_request("model must not be empty"));
    }
    if let Some(endpoint) = &update.endpoint {
        if !(endpoint.starts_with("http://") || endpoint.starts_with("https://")) {
            return Err(ApiError::bad_request("endpoint must be an http(s) URL"));
        }
    }
    let mut settings = state.settings.write().unwrap_or_else(|e| e.into_inner());
    if let Some(b) = update.backend {
        settings.backend = b;
    }
    if let Some(m) = update.model {
        settings.model = m.trim().to_string();
    }
    if let Some(e) = update.endpoint {
        settings.endpoint = e;
    }
    if let Some(k) = update.api_key {
        settings.api_key = Some(k.trim().to_string()).filter(|k| !k.is_empty());
    }
    Ok(Json(settings.public()))
}
