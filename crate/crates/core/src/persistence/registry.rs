//! Bot registry (`registry.json`): every bot instance with its simulated
//! guild and last engine snapshot, rewritten atomically on change.
//!
//! ```json
//! {"version":1,"next_bot":3,"bots":[{"instance":{"id":"b1","name":"Tutorial bot",...},
//!   "guild":{...},"seed":7,"latency_jitter_ms":[5,40],"state":{...}}]}
//! ```

use std::io;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::mpsc;
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;

use serde::{Deserialize, Serialize};

use super::write_atomic;
use crate::domain::{BotId, BotInstance};
use crate::engine::EngineState;
use crate::gateway::GuildSpec;

const REGISTRY_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BotRecord {
    pub instance: BotInstance,
    pub guild: GuildSpec,
    pub seed: u64,
    pub latency_jitter_ms: (u64, u64),
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub state: Option<EngineState>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Registry {
    pub version: u32,
    /// Sequence number for the next generated bot id.
    pub next_bot: u32,
    #[serde(default)]
    pub bots: Vec<BotRecord>,
}

impl Default for Registry {
    fn default() -> Self {
        Self {
            version: REGISTRY_VERSION,
            next_bot: 1,
            bots: Vec::new(),
        }
    }
}

impl Registry {
    /// Loads the registry, or an empty one if the file does not exist.
    pub fn load(path: &Path) -> io::Result<Self> {
        match std::fs::read(path) {
            Ok(bytes) => serde_json::from_slice(&bytes)
                .map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e)),
            Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(Self::default()),
            Err(e) => Err(e),
        }
    }

    pub fn save(&self, path: &Path) -> io::Result<()> {
        let json = serde_json::to_vec_pretty(self).map_err(io::Error::other)?;
        write_atomic(path, |w| w.write_all(&json))
    }

    pub fn get(&self, id: &BotId) -> Option<&BotRecord> {
        self.bots.iter().find(|b| &b.instance.id == id)
    }

    pub fn get_mut(&mut self, id: &BotId) -> Option<&mut BotRecord> {
        self.bots.iter_mut().find(|b| &b.instance.id == id)
    }

    /// Allocates the next `b{n}` id.
    pub fn allocate_id(&mut self) -> BotId {
        let id = BotId::new(format!("b{}", self.next_bot));
        self.next_bot += 1;
        id
    }
}

enum Msg {
    Save(Box<Registry>),
    Flush(mpsc::Sender<()>),
}

/// Background writer that persists registry snapshots, coalescing bursts so
/// only the newest pending snapshot is written.
pub struct RegistryWriter {
    path: PathBuf,
    tx: Mutex<Option<mpsc::Sender<Msg>>>,
    failures: Arc<AtomicU64>,
    thread: Mutex<Option<JoinHandle<()>>>,
}

impl RegistryWriter {
    pub fn spawn(path: impl Into<PathBuf>) -> Self {
        let path = path.into();
        let (tx, rx) = mpsc::channel::<Msg>();
        let failures = Arc::new(AtomicU64::new(0));
        let (p, f) = (path.clone(), failures.clone());
        let thread = std::thread::Builder::new()
            .name("registry-writer".into())
            .spawn(move || {
                while let Ok(first) = rx.recv() {
                    let mut latest = None;
                    let mut waiting = Vec::new();
                    let mut next = Some(first);
                    while let Some(m) = next.take() {
                        match m {
                            Msg::Save(r) => latest = Some(r),
                            Msg::Flush(done) => waiting.push(done),
                        }
                        next = rx.try_recv().ok();
                    }
                    if let Some(r) = latest {
                        if let Err(e) = r.save(&p) {
                            f.fetch_add(1, Ordering::Relaxed);
                            tracing::error!(error = %e, path = %p.display(), "registry save failed");
                        }
                    }
                    for w in waiting {
                        let _ = w.send(());
                    }
                }
            })
            .expect("spawn registry writer");
        Self {
            path,
            tx: Mutex::new(Some(tx)),
            failures,
            thread: Mutex::new(Some(thread)),
        }
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn save(&self, registry: Registry) {
        if let Some(tx) = self.tx.lock().unwrap().as_ref() {
            let _ = tx.send(Msg::Save(Box::new(registry)));
        }
    }

    /// Waits until every snapshot queued so far is on disk.
    pub fn flush(&self) {
        let (done, wait) = mpsc::channel();
        let sent = self
            .tx
            .lock()
            .unwrap()
            .as_ref()
            .is_some_and(|tx| tx.send(Msg::Flush(done)).is_ok());
        if sent {
            let _ = wait.recv();
        }
    }

    pub fn failures(&self) -> u64 {
        self.failures.load(Ordering::Relaxed)
    }

    /// Writes what is pending and stops the thread.
    pub fn close(&self) {
        self.tx.lock().unwrap().take();
        if let Some(t) = self.thread.lock().unwrap().take() {
            let _ = t.join();
        }
    }
}

impl Drop for RegistryWriter {
    fn drop(&mut self) {
        self.close();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{BotMode, Group};
    use crate::gateway::MemberSpec;
    use chrono::{TimeZone, Utc};

    fn record(id: &str) -> BotRecord {
        BotRecord {
            instance: BotInstance::new(
                id.into(),
                "Tutorial".into(),
                "guild".into(),
                BotMode::Development,
                Utc.with_ymd_and_hms(2025, 1, 6, 9, 0, 0).unwrap(),
            ),
            guild: GuildSpec {
                guild_id: "guild".into(),
                channels: vec!["lecture".into()],
                members: vec![MemberSpec::new("s1", "Ada")],
                roles: vec![],
                admin_role_id: "admin".into(),
                groups: vec![Group::new("g1", "lecture")],
            },
            seed: 7,
            latency_jitter_ms: (5, 40),
            state: Some(EngineState::default()),
        }
    }

    #[test]
    fn missing_file_is_empty_registry() {
        let dir = tempfile::tempdir().unwrap();
        let r = Registry::load(&dir.path().join("registry.json")).unwrap();
        assert_eq!(r, Registry::default());
    }

    #[test]
    fn save_load_round_trip_without_token_refs() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("registry.json");
        let mut r = Registry::default();
        let id = r.allocate_id();
        r.bots.push(record(id.as_str()));
        r.save(&p).unwrap();
        assert_eq!(Registry::load(&p).unwrap(), r);
        assert!(!std::fs::read_to_string(&p).unwrap().contains("bot-token"));
    }

    #[test]
    fn writer_keeps_latest_snapshot() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("registry.json");
        let w = RegistryWriter::spawn(&p);
        let mut r = Registry::default();
        for i in 0..50 {
            r.next_bot = i;
            w.save(r.clone());
        }
        w.flush();
        assert_eq!(Registry::load(&p).unwrap().next_bot, 49);
        w.close();
    }
}
