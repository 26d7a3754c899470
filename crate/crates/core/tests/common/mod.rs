#![allow(dead_code)]

use std::sync::Arc;

use chrono::{DateTime, Duration, TimeZone, Utc};
use edubot_core::domain::{Group, MemberId};
use edubot_core::engine::{
    Command, CommandKind, CommandResult, Engine, EngineContext, EngineError, MemoryAudit,
    MemoryExports,
};
use edubot_core::gateway::{ChatEvent, GuildSpec, MemberSpec, SimPlatform};

pub fn t0() -> DateTime<Utc> {
    Utc.with_ymd_and_hms(2025, 1, 6, 9, 0, 0).unwrap()
}

pub fn secs(s: i64) -> DateTime<Utc> {
    t0() + Duration::seconds(s)
}

pub fn ms(m: i64) -> DateTime<Utc> {
    t0() + Duration::milliseconds(m)
}

/// Guild with `students` members s1..sN, a roster of the first `roster`
/// of them in group g1 (channel `lecture`), plus a stranger `x1`.
pub fn guild(students: usize, roster: usize) -> GuildSpec {
    let mut members: Vec<MemberSpec> = (1..=students)
        .map(|i| MemberSpec::new(format!("s{i}"), format!("Student {i}")))
        .collect();
    members.push(MemberSpec::new("x1", "Visitor"));
    GuildSpec {
        guild_id: "tutorial".into(),
        channels: vec!["lecture".into(), "lab".into()],
        members,
        roles: vec!["tutor".into()],
        admin_role_id: "admin".into(),
        groups: vec![
            Group::new("g1", "lecture").with_roster((1..=roster).map(|i| format!("s{i}"))),
            Group::new("g2", "lab"),
        ],
    }
}

pub struct Fixture {
    pub platform: Arc<SimPlatform>,
    pub audit: Arc<MemoryAudit>,
    pub exports: Arc<MemoryExports>,
    pub engine: Engine,
}

impl Fixture {
    pub fn new(students: usize, roster: usize) -> Self {
        Self::with_guild(guild(students, roster), 7)
    }

    pub fn with_guild(g: GuildSpec, seed: u64) -> Self {
        let platform = Arc::new(SimPlatform::new(&g, seed, (5, 40)).unwrap());
        let audit = Arc::new(MemoryAudit::default());
        let exports = Arc::new(MemoryExports::default());
        let engine = Engine::new(
            "b1".into(),
            EngineContext::simulated(&"b1".into(), &g),
            g.groups.clone(),
            platform.clone(),
            audit.clone(),
            exports.clone(),
        )
        .unwrap();
        Self {
            platform,
            audit,
            exports,
            engine,
        }
    }

    pub fn run(&mut self, kind: CommandKind, at: DateTime<Utc>) -> Result<CommandResult, EngineError> {
        self.engine.execute(&Command::new("k1", kind), at)
    }

    pub fn start(&mut self, group: &str, code: &str, at: DateTime<Utc>) -> CommandResult {
        self.run(
            CommandKind::StartAttendance {
                group_id: group.into(),
                code: code.into(),
            },
            at,
        )
        .unwrap()
    }

    pub fn dm(&mut self, member: &str, text: &str, at: DateTime<Utc>) -> Vec<edubot_core::gateway::ChatAction> {
        let ev = self
            .platform
            .apply(&MemberId::new(member), &edubot_core::gateway::Behavior::dm(text), at)
            .unwrap();
        self.engine.on_event(&ev)
    }

    pub fn click(
        &mut self,
        member: &str,
        behavior: edubot_core::gateway::Behavior,
        at: DateTime<Utc>,
    ) -> Vec<edubot_core::gateway::ChatAction> {
        let ev: ChatEvent = self
            .platform
            .apply(&MemberId::new(member), &behavior, at)
            .unwrap();
        self.engine.on_event(&ev)
    }

    pub fn last_dm_text(&self, member: &str) -> String {
        self.platform
            .dms_to(&MemberId::new(member))
            .last()
            .map(|m| m.text.clone())
            .unwrap_or_default()
    }
}
