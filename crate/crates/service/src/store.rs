use std::collections::HashMap;
use std::io;
use std::path::{Path, PathBuf};
use std::sync::{Arc, RwLock};
use std::time::Duration;

use saskit_core::agent::{SessionSnapshot, SessionState};
use saskit_core::PlotArtifact;

/// Live sessions, optionally mirrored to `<data_dir>/sessions/<id>.json`.
#[derive(Debug)]
pub struct SessionStore {
    sessions: RwLock<HashMap<String, Arc<SessionState>>>,
    dir: Option<PathBuf>,
    ttl: Duration,
}

impl SessionStore {
    pub fn new(data_dir: Option<&Path>, ttl: Duration) -> io::Result<Self> {
        let dir = data_dir.map(|d| d.join("sessions"));
        let mut sessions = HashMap::new();
        if let Some(dir) = &dir {
            std::fs::create_dir_all(dir)?;
            for entry in std::fs::read_dir(dir)? {
                let path = entry?.path();
                if path.extension().and_then(|e| e.to_str()) != Some("json") {
                    continue;
                }
                // Unreadable snapshots are skipped rather than failing startup.
                let Ok(text) = std::fs::read_to_string(&path) else {
                    continue;
                };
                let Ok(snap) = serde_json::from_str::<SessionSnapshot>(&text) else {
                    continue;
                };
                let s = SessionState::from_snapshot(snap);
                sessions.insert(s.id().to_string(), Arc::new(s));
            }
        }
        Ok(Self {
            sessions: RwLock::new(sessions),
            dir,
            ttl,
        })
    }

    pub fn create(&self) -> Arc<SessionState> {
        let s = Arc::new(SessionState::new());
        self.sessions
            .write()
            .unwrap_or_else(|e| e.into_inner())
            .insert(s.id().to_string(), Arc::clone(&s));
        self.persist(&s);
        s
    }

    pub fn get(&self, id: &str) -> Option<Arc<SessionState>> {
        let s = self
            .sessions
            .read()
            .unwrap_or_else(|e| e.into_inner())
            .get(id)
            .cloned()?;
        if s.idle_for() > self.ttl && !s.is_busy() {
            self.remove(id);
            return None;
        }
        Some(s)
    }

    pub fn len(&self) -> usize {
        self.sessions
            .read()
            .unwrap_or_else(|e| e.into_inner())
            .len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn find_plot(&self, plot_id: &str) -> Option<PlotArtifact> {
        let sessions: Vec<_> = self
            .sessions
            .read()
            .unwrap_or_else(|e| e.into_inner())
            .values()
            .cloned()
            .collect();
        sessions.iter().find_map(|s| s.plot(plot_id))
    }

    fn remove(&self, id: &str) {
        self.sessions
            .write()
            .unwrap_or_else(|e| e.into_inner())
            .remove(id);
        if let Some(dir) = &self.dir {
            let _ = std::fs::remove_file(dir.join(format!("{id}.json")));
        }
    }

    /// Drops sessions idle longer than the expiry; returns how many.
    pub fn purge_expired(&self) -> usize {
        let stale: Vec<String> = self
            .sessions
            .read()
            .unwrap_or_else(|e| e.into_inner())
            .values()
            .filter(|s| s.idle_for() > self.ttl && !s.is_busy())
            .map(|s| s.id().to_string())
            .collect();
        for id in &stale {
            self.remove(id);
        }
        stale.len()
    }

    /// Writes the session snapshot when persistence is on. Failures are
    /// recorded in the session log and otherwise ignored.
    pub fn persist(&self, s: &SessionState) {
        let Some(dir) = &self.dir else { return };
        let path = dir.join(format!("{}.json", s.id()));
        let tmp = path.with_extension("json.tmp");
        let result = serde_json::to_vec(&s.snapshot())
            .map_err(io::Error::other)
            .and_then(|bytes| std::fs::write(&tmp, bytes))
            .and_then(|_| std::fs::rename(&tmp, &path));
        if let Err(e) = result {
            s.log(format!("[service] could not persist session: {e}"));
        }
    }
}
