//! HTTP front end for the saskit agents: sessions, chat turns, uploads,
//! plot documents, logs, model listings and backend settings, plus the
//! static UI at `/`.

mod api;
mod error;
mod store;

use std::io;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::{Arc, RwLock};
use std::thread::JoinHandle;
use std::time::Duration;

use axum::extract::DefaultBodyLimit;
use axum::routing::{get, post};
use axum::Router;
use saskit_core::agent::{BackendSettings, ScriptedBackend, Toolbox};
use saskit_core::docstore::DocStore;
use saskit_core::models::ModelRegistry;
use tokio::net::TcpListener;
use tokio::sync::Notify;
use tower_http::services::ServeDir;

pub use error::{ApiError, ApiResult};
pub use store::SessionStore;

pub const DEFAULT_SESSION_TTL: Duration = Duration::from_secs(24 * 60 * 60);
pub const DEFAULT_MAX_UPLOAD: usize = 10 * 1024 * 1024;

const INDEX_HTML: &str = include_str!("../static/index.html");

#[derive(Debug, Clone)]
pub struct AppConfig {
    /// Enables session snapshots under `<data_dir>/sessions`.
    pub data_dir: Option<PathBuf>,
    /// Serves this directory at `/` instead of the bundled page.
    pub ui_dir: Option<PathBuf>,
    /// Extra `.txt`/`.md` documents for the retrieval index.
    pub docs_dir: Option<PathBuf>,
    pub session_ttl: Duration,
    pub max_upload: usize,
    pub settings: BackendSettings,
    pub scripted: ScriptedBackend,
}

impl Default for AppConfig {
    fn default() -> Self {
        Self {
            data_dir: None,
            ui_dir: None,
            docs_dir: None,
            session_ttl: DEFAULT_SESSION_TTL,
            max_upload: DEFAULT_MAX_UPLOAD,
            settings: BackendSettings::default(),
            scripted: ScriptedBackend::canonical(),
        }
    }
}

#[derive(Debug)]
pub struct AppState {
    pub sessions: SessionStore,
    pub toolbox: Toolbox,
    pub settings: RwLock<BackendSettings>,
    pub scripted: Arc<ScriptedBackend>,
    pub max_upload: usize,
    pub session_ttl: Duration,
    ui_dir: Option<PathBuf>,
}

impl AppState {
    pub fn new(config: AppConfig) -> io::Result<Self> {
        let registry = Arc::new(ModelRegistry::standard());
        let docs =
            DocStore::build(&registry, config.docs_dir.as_deref()).map_err(io::Error::other)?;
        Ok(Self {
            sessions: SessionStore::new(config.data_dir.as_deref(), config.session_ttl)?,
            toolbox: Toolbox::new(registry, Arc::new(docs)),
            settings: RwLock::new(config.settings),
            scripted: Arc::new(config.scripted),
            max_upload: config.max_upload,
            session_ttl: config.session_ttl,
            ui_dir: config.ui_dir,
        })
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    let api = Router::new()
        .route("/session", post(api::create_session))
        .route("/session/{id}", get(api::get_session))
        .route("/chat", post(api::chat))
        .route(
            "/upload",
            post(api::upload).layer(DefaultBodyLimit::max(state.max_upload)),
        )
        .route("/plots/{id}", get(api::get_plot))
        .route("/logs", get(api::get_logs))
        .route("/files", get(api::get_files))
        .route("/models", get(api::get_models))
        .route("/settings", get(api::get_settings).put(api::put_settings))
        .fallback(api::not_found)
        .method_not_allowed_fallback(api::method_not_allowed);

    let app = Router::new().nest("/api", api);
    let app = match &state.ui_dir {
        Some(dir) => app.fallback_service(ServeDir::new(dir)),
        None => app.route("/", get(api::index)).fallback(api::not_found),
    };
    app.with_state(state)
}

async fn purge_loop(state: Arc<AppState>) {
    let period = (state.session_ttl / 4).clamp(Duration::from_millis(50), Duration::from_secs(60));
    let mut tick = tokio::time::interval(period);
    loop {
        tick.tick().await;
        state.sessions.purge_expired();
    }
}

/// Serves until `shutdown` is notified.
pub async fn serve(
    listener: TcpListener,
    state: Arc<AppState>,
    shutdown: Arc<Notify>,
) -> io::Result<()> {
    let purge = tokio::spawn(purge_loop(Arc::clone(&state)));
    let result = axum::serve(listener, router(state))
        .with_graceful_shutdown(async move { shutdown.notified().await })
        .await;
    purge.abort();
    result
}

fn runtime() -> io::Result<tokio::runtime::Runtime> {
    tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
}

/// Binds `addr` and serves on the current thread until the process exits.
pub fn run_blocking(config: AppConfig, addr: SocketAddr) -> io::Result<()> {
    let state = Arc::new(AppState::new(config)?);
    runtime()?.block_on(async move {
        let listener = TcpListener::bind(addr).await?;
        eprintln!("saskit listening on http://{}", listener.local_addr()?);
        serve(listener, state, Arc::new(Notify::new())).await
    })
}

/// A server on its own thread; dropping it shuts the server down.
#[derive(Debug)]
pub struct RunningServer {
    pub addr: SocketAddr,
    pub state: Arc<AppState>,
    shutdown: Arc<Notify>,
    thread: Option<JoinHandle<io::Result<()>>>,
}

impl RunningServer {
    pub fn url(&self, path: &str) -> String {
        format!("http://{}{}", self.addr, path)
    }
}

impl Drop for RunningServer {
    fn drop(&mut self) {
        self.shutdown.notify_one();
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

/// Starts a server on a background thread and returns once it is bound.
pub fn start_background(config: AppConfig, addr: SocketAddr) -> io::Result<RunningServer> {
    let state = Arc::new(AppState::new(config)?);
    let shutdown = Arc::new(Notify::new());
    let (tx, rx) = std::sync::mpsc::channel();
    let thread = {
        let state = Arc::clone(&state);
        let shutdown = Arc::clone(&shutdown);
        std::thread::spawn(move || {
            runtime()?.block_on(async move {
                let listener = match TcpListener::bind(addr).await {
                    Ok(l) => l,
                    Err(e) => {
                        let _ = tx.send(Err(io::Error::new(e.kind(), e.to_string())));
                        return Err(e);
                    }
                };
                let _ = tx.send(listener.local_addr());
                serve(listener, state, shutdown).await
            })
        })
    };
    let addr = rx
        .recv()
        .map_err(|_| io::Error::other("server thread exited before binding"))??;
    Ok(RunningServer {
        addr,
        state,
        shutdown,
        thread: Some(thread),
    })
}
