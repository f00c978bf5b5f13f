use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Mutex, MutexGuard, RwLock, RwLockReadGuard, RwLockWriteGuard};
use std::time::{Duration, Instant};

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use super::message::Message;
use crate::{Dataset, PlotArtifact};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoredFile {
    pub file_id: String,
    pub name: String,
    pub dataset: Dataset,
    #[serde(default)]
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileSummary {
    pub file_id: String,
    pub name: String,
    pub points: usize,
    pub q_range: (f64, f64),
}

impl StoredFile {
    pub fn summary(&self) -> FileSummary {
        FileSummary {
            file_id: self.file_id.clone(),
            name: self.name.clone(),
            points: self.dataset.len(),
            q_range: self.dataset.q_range(),
        }
    }
}

/// Serializable copy of a session, used for persistence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionSnapshot {
    pub session_id: String,
    pub transcript: Vec<Message>,
    pub files: Vec<StoredFile>,
    pub plots: Vec<PlotArtifact>,
    pub logs: Vec<String>,
}

fn lock<T>(m: &Mutex<T>) -> MutexGuard<'_, T> {
    m.lock().unwrap_or_else(|e| e.into_inner())
}

fn read<T>(m: &RwLock<T>) -> RwLockReadGuard<'_, T> {
    m.read().unwrap_or_else(|e| e.into_inner())
}

fn write<T>(m: &RwLock<T>) -> RwLockWriteGuard<'_, T> {
    m.write().unwrap_or_else(|e| e.into_inner())
}

/// One conversation. Each part has its own lock so uploads, plot reads and
/// log polling proceed while a turn is running.
#[derive(Debug)]
pub struct SessionState {
    id: String,
    last_active: Mutex<Instant>,
    transcript: Mutex<Vec<Message>>,
    files: RwLock<IndexMap<String, StoredFile>>,
    plots: RwLock<IndexMap<String, PlotArtifact>>,
    logs: Mutex<Vec<String>>,
    busy: AtomicBool,
}

/// Held for the duration of a turn; dropping it frees the session.
#[derive(Debug)]
pub struct TurnGuard<'a> {
    busy: &'a AtomicBool,
}

impl Drop for TurnGuard<'_> {
    fn drop(&mut self) {
        self.busy.store(false, Ordering::Release);
    }
}

impl Default for SessionState {
    fn default() -> Self {
        Self::new()
    }
}

impl SessionState {
    pub fn new() -> Self {
        Self::with_id(format!("sess-{}", uuid::Uuid::new_v4().simple()))
    }

    pub fn with_id(id: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            last_active: Mutex::new(Instant::now()),
            transcript: Mutex::new(Vec::new()),
            files: RwLock::new(IndexMap::new()),
            plots: RwLock::new(IndexMap::new()),
            logs: Mutex::new(Vec::new()),
            busy: AtomicBool::new(false),
        }
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn touch(&self) {
        *lock(&self.last_active) = Instant::now();
    }

    pub fn idle_for(&self) -> Duration {
        lock(&self.last_active).elapsed()
    }

    pub fn try_begin_turn(&self) -> Option<TurnGuard<'_>> {
        self.busy
            .compare_exchange(false, true, Ordering::Acquire, Ordering::Relaxed)
            .ok()
            .map(|_| TurnGuard { busy: &self.busy })
    }

    pub fn is_busy(&self) -> bool {
        self.busy.load(Ordering::Acquire)
    }

    pub fn transcript(&self) -> Vec<Message> {
        lock(&self.transcript).clone()
    }

    pub fn push_message(&self, m: Message) {
        lock(&self.transcript).push(m);
    }

    pub fn add_file(&self, name: &str, dataset: Dataset, warnings: Vec<String>) -> FileSummary {
        let file = StoredFile {
            file_id: format!("file-{}", uuid::Uuid::new_v4().simple()),
            name: name.to_string(),
            dataset,
            warnings,
        };
        let summary = file.summary();
        write(&self.files).insert(file.file_id.clone(), file);
        summary
    }

    pub fn file(&self, file_id: &str) -> Option<StoredFile> {
        read(&self.files).get(file_id).cloned()
    }

    pub fn files(&self) -> Vec<FileSummary> {
        read(&self.files)
            .values()
            .map(StoredFile::summary)
            .collect()
    }

    pub fn has_files(&self) -> bool {
        !read(&self.files).is_empty()
    }

    pub fn add_plot(&self, plot: PlotArtifact) -> String {
        let id = plot.plot_id.clone();
        write(&self.plots).insert(id.clone(), plot);
        id
    }

    pub fn plot(&self, plot_id: &str) -> Option<PlotArtifact> {
        read(&self.plots).get(plot_id).cloned()
    }

    pub fn plot_ids(&self) -> Vec<String> {
        read(&self.plots).keys().cloned().collect()
    }

    pub fn log(&self, line: impl Into<String>) {
        lock(&self.logs).push(line.into());
    }

    /// Lines after `cursor` and the cursor to pass next time.
    pub fn logs_since(&self, cursor: usize) -> (Vec<String>, usize) {
        let logs = lock(&self.logs);
        let start = cursor.min(logs.len());
        (logs[start..].to_vec(), logs.len())
    }

    pub fn log_len(&self) -> usize {
        lock(&self.logs).len()
    }

    pub fn snapshot(&self) -> SessionSnapshot {
        SessionSnapshot {
            session_id: self.id.clone(),
            transcript: self.transcript(),
            files: read(&self.files).values().cloned().collect(),
            plots: read(&self.plots).values().cloned().collect(),
            logs: lock(&self.logs).clone(),
        }
    }

    pub fn from_snapshot(s: SessionSnapshot) -> Self {
        let session = Self::with_id(s.session_id);
        *lock(&session.transcript) = s.transcript;
        *write(&session.files) = s
            .files
            .into_iter()
            .map(|f| (f.file_id.clone(), f))
            .collect();
        *write(&session.plots) = s
            .plots
            .into_iter()
            .map(|p| (p.plot_id.clone(), p))
            .collect();
        *lock(&session.logs) = s.logs;
        session
    }
}
