//! Bot instances: the persisted registry plus one engine thread and one
//! simulated chat platform per running bot.

use std::collections::BTreeMap;
use std::io;
use std::path::Path;
use std::sync::{Arc, Mutex};

use edubot_core::clock::Clock;
use edubot_core::domain::{BotId, BotInstance, BotMode, BotState, Group, PresenceSnapshot};
use edubot_core::engine::{
    AuditSink, ChangeHook, Engine, EngineContext, EngineError, EngineHandle, EngineState, ExportSink,
};
use edubot_core::gateway::{GuildSpec, MemberSpec, SimPlatform};
use edubot_core::persistence::{BotRecord, Registry, RegistryWriter};
use serde::Deserialize;

const DEFAULT_STUDENTS: usize = 30;
const MAX_STUDENTS: usize = 5_000;
const DEFAULT_JITTER_MS: (u64, u64) = (5, 40);

/// Body of `POST /api/bots`. Without an explicit guild a simulated one is
/// generated with `students` members, all on the roster of group `g1`.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CreateBot {
    pub name: String,
    #[serde(default)]
    pub mode: Option<BotMode>,
    #[serde(default)]
    pub guild: Option<GuildSpec>,
    #[serde(default)]
    pub students: Option<usize>,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub latency_jitter_ms: Option<(u64, u64)>,
    /// Platform token; kept in the secrets file only.
    #[serde(default)]
    pub token: Option<String>,
}

/// A generated guild: channels `announcements`, `lecture` and `lab`,
/// members `s1..sN`, role `tutor`, and group `g1` (posting in `lecture`)
/// whose roster is every student.
pub fn default_guild(bot: &BotId, students: usize) -> GuildSpec {
    let members: Vec<MemberSpec> = (1..=students)
        .map(|i| MemberSpec::new(format!("s{i}"), format!("Student {i}")))
        .collect();
    GuildSpec {
        guild_id: format!("guild-{bot}").into(),
        channels: vec!["announcements".into(), "lecture".into(), "lab".into()],
        groups: vec![Group::new("g1", "lecture").with_roster(members.iter().map(|m| m.id.clone()))],
        members,
        roles: vec!["tutor".into()],
        admin_role_id: "admin".into(),
    }
}

/// A started bot.
#[derive(Clone)]
pub struct Runtime {
    pub handle: Arc<EngineHandle>,
    pub platform: Arc<SimPlatform>,
}

struct Inner {
    registry: Registry,
    runtimes: BTreeMap<BotId, Runtime>,
}

pub struct BotManager {
    inner: Arc<Mutex<Inner>>,
    writer: Arc<RegistryWriter>,
    audit: Arc<dyn AuditSink>,
    exports: Arc<dyn ExportSink>,
    clock: Arc<dyn Clock>,
}

impl BotManager {
    /// Loads the registry. Bots that were running when the process stopped
    /// come back stopped, with their engine state intact.
    pub fn open(
        registry_path: &Path,
        audit: Arc<dyn AuditSink>,
        exports: Arc<dyn ExportSink>,
        clock: Arc<dyn Clock>,
    ) -> io::Result<Self> {
        let mut registry = Registry::load(registry_path)?;
        for rec in &mut registry.bots {
            if matches!(rec.instance.state, BotState::Running | BotState::Starting) {
                rec.instance.state = BotState::Stopped;
            }
        }
        let writer = Arc::new(RegistryWriter::spawn(registry_path));
        writer.save(registry.clone());
        Ok(Self {
            inner: Arc::new(Mutex::new(Inner {
                registry,
                runtimes: BTreeMap::new(),
            })),
            writer,
            audit,
            exports,
            clock,
        })
    }

    fn persist(&self, inner: &Inner) {
        self.writer.save(inner.registry.clone());
    }

    pub fn create(&self, req: CreateBot) -> Result<BotInstance, EngineError> {
        let name = req.name.trim();
        if name.is_empty() || name.chars().count() > 100 {
            return Err(EngineError::InvalidInput(
                "bot name must be between 1 and 100 characters".into(),
            ));
        }
        if req.guild.is_some() && req.students.is_some() {
            return Err(EngineError::InvalidInput("give either guild or students, not both".into()));
        }
        let students = req.students.unwrap_or(DEFAULT_STUDENTS);
        if students > MAX_STUDENTS {
            return Err(EngineError::InvalidInput(format!(
                "students must be at most {MAX_STUDENTS}"
            )));
        }
        let jitter = req.latency_jitter_ms.unwrap_or(DEFAULT_JITTER_MS);
        if jitter.0 > jitter.1 {
            return Err(EngineError::InvalidInput("latency_jitter_ms range is inverted".into()));
        }
        let mut inner = self.inner.lock().unwrap();
        let id = BotId::new(format!("b{}", inner.registry.next_bot));
        let guild = req.guild.unwrap_or_else(|| default_guild(&id, students));
        guild.validate().map_err(EngineError::InvalidInput)?;
        for g in &guild.groups {
            g.validate()?;
        }
        let id = inner.registry.allocate_id();
        let instance = BotInstance::new(
            id,
            name.to_owned(),
            guild.guild_id.clone(),
            req.mode.unwrap_or_default(),
            self.clock.now(),
        );
        inner.registry.bots.push(BotRecord {
            instance: instance.clone(),
            guild,
            seed: req.seed.unwrap_or(1),
            latency_jitter_ms: jitter,
            state: None,
        });
        self.persist(&inner);
        Ok(instance)
    }

    pub fn list(&self) -> Vec<BotInstance> {
        let inner = self.inner.lock().unwrap();
        inner.registry.bots.iter().map(|b| b.instance.clone()).collect()
    }

    pub fn get(&self, id: &BotId) -> Option<BotInstance> {
        self.inner.lock().unwrap().registry.get(id).map(|b| b.instance.clone())
    }

    pub fn record(&self, id: &BotId) -> Option<BotRecord> {
        self.inner.lock().unwrap().registry.get(id).cloned()
    }

    pub fn runtime(&self, id: &BotId) -> Option<Runtime> {
        self.inner.lock().unwrap().runtimes.get(id).cloned()
    }

    pub fn platform(&self, id: &BotId) -> Option<Arc<SimPlatform>> {
        self.runtime(id).map(|r| r.platform)
    }

    pub fn running(&self) -> Vec<BotId> {
        self.inner.lock().unwrap().runtimes.keys().cloned().collect()
    }

    /// Engine state as last persisted (stopped bots) or as of the last
    /// change batch (running bots).
    pub fn stored_state(&self, id: &BotId) -> Option<EngineState> {
        let inner = self.inner.lock().unwrap();
        inner.registry.get(id).map(|b| b.state.clone().unwrap_or_default())
    }

    pub fn presence(&self, id: &BotId) -> Option<PresenceSnapshot> {
        self.platform(id).map(|p| p.presence())
    }

    /// Waits until the bot's engine has handled everything queued so far.
    pub async fn sync(&self, id: &BotId) -> bool {
        match self.runtime(id) {
            Some(rt) => rt.handle.read(|_| ()).await.is_ok(),
            None => false,
        }
    }

    pub fn start(&self, id: &BotId) -> Result<BotInstance, EngineError> {
        let mut inner = self.inner.lock().unwrap();
        let rec = inner
            .registry
            .get_mut(id)
            .ok_or_else(|| EngineError::NotFound(format!("unknown bot {id}")))?;
        rec.instance.transition(BotState::Starting)?;
        let launched = self.launch(rec);
        let rec = inner.registry.get_mut(id).expect("record exists");
        match launched {
            Ok(rt) => {
                rec.instance.transition(BotState::Running)?;
                let instance = rec.instance.clone();
                inner.runtimes.insert(id.clone(), rt);
                self.persist(&inner);
                Ok(instance)
            }
            Err(e) => {
                rec.instance.transition(BotState::Error)?;
                self.persist(&inner);
                Err(e)
            }
        }
    }

    fn launch(&self, rec: &BotRecord) -> Result<Runtime, EngineError> {
        let id = rec.instance.id.clone();
        let platform = Arc::new(
            SimPlatform::new(&rec.guild, rec.seed, rec.latency_jitter_ms)
                .map_err(EngineError::InvalidInput)?
                .with_clock(self.clock.clone()),
        );
        let ctx = EngineContext::simulated(&id, &rec.guild);
        let engine = match &rec.state {
            Some(state) => Engine::restore(
                id.clone(),
                ctx,
                state.clone(),
                platform.clone(),
                self.audit.clone(),
                self.exports.clone(),
            )?,
            None => Engine::new(
                id.clone(),
                ctx,
                rec.guild.groups.clone(),
                platform.clone(),
                self.audit.clone(),
                self.exports.clone(),
            )?,
        };
        let inner = Arc::downgrade(&self.inner);
        let writer = self.writer.clone();
        let hook_id = id.clone();
        let on_change: ChangeHook = Box::new(move |state: &EngineState| {
            let Some(inner) = inner.upgrade() else { return };
            let mut inner = inner.lock().unwrap();
            if let Some(rec) = inner.registry.get_mut(&hook_id) {
                rec.state = Some(state.clone());
                writer.save(inner.registry.clone());
            }
        });
        let handle = Arc::new(EngineHandle::spawn(engine, self.clock.clone(), Some(on_change)));
        let events = handle.events();
        platform.set_event_sink(move |ev| {
            events.send(ev);
        });
        Ok(Runtime { handle, platform })
    }

    /// Stops the engine thread (after it drains its queue) and stores its
    /// final state.
    pub async fn stop(&self, id: &BotId) -> Result<BotInstance, EngineError> {
        let rt = {
            let mut inner = self.inner.lock().unwrap();
            let rec = inner
                .registry
                .get_mut(id)
                .ok_or_else(|| EngineError::NotFound(format!("unknown bot {id}")))?;
            rec.instance.transition(BotState::Stopped)?;
            let rt = inner.runtimes.remove(id);
            self.persist(&inner);
            rt
        };
        if let Some(rt) = rt {
            rt.platform.clear_event_sink();
            let handle = rt.handle.clone();
            let engine = tokio::task::spawn_blocking(move || handle.shutdown())
                .await
                .map_err(|e| EngineError::Internal(e.to_string()))?;
            if let Some(engine) = engine {
                let mut inner = self.inner.lock().unwrap();
                if let Some(rec) = inner.registry.get_mut(id) {
                    rec.state = Some(engine.into_state());
                }
                self.persist(&inner);
            }
        }
        self.get(id).ok_or_else(|| EngineError::NotFound(format!("unknown bot {id}")))
    }

    pub fn delete(&self, id: &BotId) -> Result<BotInstance, EngineError> {
        let mut inner = self.inner.lock().unwrap();
        let pos = inner
            .registry
            .bots
            .iter()
            .position(|b| &b.instance.id == id)
            .ok_or_else(|| EngineError::NotFound(format!("unknown bot {id}")))?;
        let state = inner.registry.bots[pos].instance.state;
        if !matches!(state, BotState::Stopped | BotState::Error) {
            return Err(EngineError::Conflict(format!(
                "bot {id} is {state}; stop it before deleting it"
            )));
        }
        let rec = inner.registry.bots.remove(pos);
        self.persist(&inner);
        Ok(rec.instance)
    }

    /// Stops every running bot and flushes the registry.
    pub async fn shutdown(&self) {
        for id in self.running() {
            if let Err(e) = self.stop(&id).await {
                tracing::warn!(bot = %id, error = %e, "failed to stop bot");
            }
        }
        self.writer.flush();
    }

    /// Current registry contents.
    pub fn registry(&self) -> Registry {
        self.inner.lock().unwrap().registry.clone()
    }

    /// Blocks until pending registry writes are on disk.
    pub fn flush(&self) {
        self.writer.flush();
    }

    pub fn write_failures(&self) -> u64 {
        self.writer.failures()
    }
}
