//! Scripted scenarios for the simulated platform.
//!
//! A scenario file is JSON Lines. The first line is the header:
//!
//! ```json
//! {"kind":"scenario","seed":7,"epoch":"2025-01-06T09:00:00Z","latency_jitter_ms":[5,40],
//!  "end_ms":120000,"bot_id":"b1","guild":{"guild_id":"tutorial","channels":["lecture"],
//!  "members":[{"id":"s1","display_name":"Ada"}],"admin_role_id":"admin",
//!  "groups":[{"id":"g1","channel_id":"lecture","roster":["s1"]}]}}
//! ```
//!
//! Every following line is one script entry, either a member behavior
//!
//! ```json
//! {"at_ms":100,"member":"s1","behavior":"dm_text","text":"1423"}
//! {"at_ms":900,"member":"s1","behavior":"click_button","button_id":"level-3","channel_id":"lecture"}
//! {"at_ms":950,"member":"s1","behavior":"go_offline"}
//! ```
//!
//! or an instructor command executed by the engine:
//!
//! ```json
//! {"at_ms":0,"actor":"k1","command":{"type":"start_attendance","group_id":"g1","code":"1423"}}
//! ```
//!
//! Offsets are milliseconds after `epoch` and must be non-decreasing. Member
//! events are additionally delayed by a jitter drawn from a ChaCha8 stream
//! seeded with `seed`, but are always delivered in script order.

use std::path::Path;

use chrono::{DateTime, Duration, Utc};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{ChatEvent, GatewayError, GuildSpec, SimPlatform};
use crate::clock::Timestamp;
use crate::domain::{BotId, ChannelId, MemberId, MessageRef};
use crate::engine::CommandKind;

use super::sim::MemberSpec;

/// Default scenario start: a Monday morning lecture slot.
pub const DEFAULT_EPOCH: &str = "2025-01-06T09:00:00Z";

// Keeps the event-jitter stream independent of the platform latency stream.
const EVENT_STREAM_SALT: u64 = 0x9E37_79B9_7F4A_7C15;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "behavior", rename_all = "snake_case")]
pub enum Behavior {
    DmText {
        text: String,
    },
    /// Clicks `button_id` on the newest matching message: in `channel_id` if
    /// given, else the member's DMs, else any channel.
    ClickButton {
        button_id: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        channel_id: Option<ChannelId>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        message_ref: Option<MessageRef>,
    },
    GoOffline,
    GoOnline,
}

impl Behavior {
    pub fn dm(text: impl Into<String>) -> Self {
        Behavior::DmText { text: text.into() }
    }

    pub fn click(button_id: impl Into<String>) -> Self {
        Behavior::ClickButton {
            button_id: button_id.into(),
            channel_id: None,
            message_ref: None,
        }
    }

    pub fn click_in(button_id: impl Into<String>, channel: impl Into<ChannelId>) -> Self {
        Behavior::ClickButton {
            button_id: button_id.into(),
            channel_id: Some(channel.into()),
            message_ref: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Step {
    Member { member: MemberId, behavior: Behavior },
    Instructor { actor: String, command: CommandKind },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "EntryRepr", into = "EntryRepr")]
pub struct ScriptEntry {
    pub at_ms: u64,
    pub step: Step,
}

impl ScriptEntry {
    pub fn member(at_ms: u64, member: impl Into<MemberId>, behavior: Behavior) -> Self {
        Self {
            at_ms,
            step: Step::Member {
                member: member.into(),
                behavior,
            },
        }
    }

    pub fn command(at_ms: u64, actor: impl Into<String>, command: CommandKind) -> Self {
        Self {
            at_ms,
            step: Step::Instructor {
                actor: actor.into(),
                command,
            },
        }
    }
}

fn default_actor() -> String {
    "scenario".into()
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum EntryRepr {
    Instructor {
        at_ms: u64,
        #[serde(default = "default_actor")]
        actor: String,
        command: CommandKind,
    },
    Member {
        at_ms: u64,
        member: MemberId,
        #[serde(flatten)]
        behavior: Behavior,
    },
}

impl From<EntryRepr> for ScriptEntry {
    fn from(r: EntryRepr) -> Self {
        match r {
            EntryRepr::Instructor {
                at_ms,
                actor,
                command,
            } => ScriptEntry::command(at_ms, actor, command),
            EntryRepr::Member {
                at_ms,
                member,
                behavior,
            } => ScriptEntry::member(at_ms, member, behavior),
        }
    }
}

impl From<ScriptEntry> for EntryRepr {
    fn from(e: ScriptEntry) -> Self {
        match e.step {
            Step::Member { member, behavior } => EntryRepr::Member {
                at_ms: e.at_ms,
                member,
                behavior,
            },
            Step::Instructor { actor, command } => EntryRepr::Instructor {
                at_ms: e.at_ms,
                actor,
                command,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct Header {
    kind: String,
    seed: u64,
    #[serde(default = "default_epoch")]
    epoch: Timestamp,
    #[serde(default = "default_jitter")]
    latency_jitter_ms: (u64, u64),
    #[serde(default, skip_serializing_if = "Option::is_none")]
    end_ms: Option<u64>,
    #[serde(default = "default_bot")]
    bot_id: BotId,
    guild: GuildSpec,
}

fn default_epoch() -> Timestamp {
    DateTime::parse_from_rfc3339(DEFAULT_EPOCH)
        .expect("valid constant")
        .with_timezone(&Utc)
}

fn default_jitter() -> (u64, u64) {
    (5, 40)
}

fn default_bot() -> BotId {
    "b1".into()
}

/// A complete scripted run: guild fixture, seed and timeline.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SimScenario {
    pub seed: u64,
    pub epoch: Timestamp,
    pub latency_jitter_ms: (u64, u64),
    /// Final sweep time; lets duration-limited surveys expire after the
    /// last script entry.
    pub end_ms: Option<u64>,
    pub bot_id: BotId,
    pub guild: GuildSpec,
    pub script: Vec<ScriptEntry>,
}

#[derive(Debug, thiserror::Error)]
pub enum ScenarioError {
    #[error("cannot read scenario: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {reason}")]
    Line { line: usize, reason: String },
    #[error("entry {index} (line {line}): {reason}", line = index + 2)]
    Entry { index: usize, reason: String },
    #[error("invalid scenario: {0}")]
    Invalid(String),
}

impl SimScenario {
    pub fn new(seed: u64, guild: GuildSpec) -> Self {
        Self {
            seed,
            epoch: default_epoch(),
            latency_jitter_ms: default_jitter(),
            end_ms: None,
            bot_id: default_bot(),
            guild,
            script: Vec::new(),
        }
    }

    pub fn push(&mut self, entry: ScriptEntry) -> &mut Self {
        self.script.push(entry);
        self
    }

    pub fn members(&self) -> &[MemberSpec] {
        &self.guild.members
    }

    pub fn load(path: &Path) -> Result<Self, ScenarioError> {
        Self::parse_jsonl(&std::fs::read_to_string(path)?)
    }

    /// Parses and validates the JSON Lines form. Blank lines are skipped but
    /// still counted for error positions.
    pub fn parse_jsonl(text: &str) -> Result<Self, ScenarioError> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l))
            .filter(|(_, l)| !l.trim().is_empty());
        let (hline, htext) = lines.next().ok_or_else(|| ScenarioError::Line {
            line: 1,
            reason: "missing header line".into(),
        })?;
        let header: Header = serde_json::from_str(htext).map_err(|e| ScenarioError::Line {
            line: hline,
            reason: format!("bad header: {e}"),
        })?;
        if header.kind != "scenario" {
            return Err(ScenarioError::Line {
                line: hline,
                reason: format!("header kind must be \"scenario\", got {:?}", header.kind),
            });
        }
        let mut script = Vec::new();
        let mut line_of = Vec::new();
        for (n, l) in lines {
            let entry: ScriptEntry = serde_json::from_str(l).map_err(|e| ScenarioError::Line {
                line: n,
                reason: format!("not a valid script entry ({e}): {l}"),
            })?;
            script.push(entry);
            line_of.push(n);
        }
        let scenario = Self {
            seed: header.seed,
            epoch: header.epoch,
            latency_jitter_ms: header.latency_jitter_ms,
            end_ms: header.end_ms,
            bot_id: header.bot_id,
            guild: header.guild,
            script,
        };
        scenario.validate().map_err(|e| match e {
            ScenarioError::Entry { index, reason } => ScenarioError::Line {
                line: line_of[index],
                reason: format!("entry {index}: {reason}"),
            },
            other => other,
        })?;
        Ok(scenario)
    }

    pub fn to_jsonl(&self) -> String {
        let header = Header {
            kind: "scenario".into(),
            seed: self.seed,
            epoch: self.epoch,
            latency_jitter_ms: self.latency_jitter_ms,
            end_ms: self.end_ms,
            bot_id: self.bot_id.clone(),
            guild: self.guild.clone(),
        };
        let mut out = serde_json::to_string(&header).expect("header serializes");
        out.push('\n');
        for e in &self.script {
            out.push_str(&serde_json::to_string(e).expect("entry serializes"));
            out.push('\n');
        }
        out
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        self.guild.validate().map_err(ScenarioError::Invalid)?;
        let (lo, hi) = self.latency_jitter_ms;
        if lo > hi {
            return Err(ScenarioError::Invalid(format!(
                "latency jitter range {lo}..{hi} is inverted"
            )));
        }
        let mut prev = 0u64;
        for (index, e) in self.script.iter().enumerate() {
            if e.at_ms < prev {
                return Err(ScenarioError::Entry {
                    index,
                    reason: format!("at_ms {} is before the previous entry ({prev})", e.at_ms),
                });
            }
            prev = e.at_ms;
            if let Step::Member { member, .. } = &e.step {
                if !self.guild.members.iter().any(|m| &m.id == member) {
                    return Err(ScenarioError::Entry {
                        index,
                        reason: format!("unknown member {member}"),
                    });
                }
            }
        }
        if let Some(end) = self.end_ms {
            if end < prev {
                return Err(ScenarioError::Invalid(format!(
                    "end_ms {end} precedes the last entry ({prev})"
                )));
            }
        }
        Ok(())
    }

    pub fn platform(&self) -> Result<SimPlatform, ScenarioError> {
        SimPlatform::new(&self.guild, self.seed, self.latency_jitter_ms).map_err(ScenarioError::Invalid)
    }

    pub fn at(&self, offset_ms: u64) -> Timestamp {
        self.epoch + Duration::milliseconds(offset_ms as i64)
    }
}

/// One step of a scenario as it reaches the engine side.
#[derive(Debug, Clone, PartialEq)]
pub enum Delivery {
    Event {
        index: usize,
        event: ChatEvent,
    },
    Command {
        index: usize,
        at: Timestamp,
        actor: String,
        command: CommandKind,
    },
    /// A member behavior that produced no event, e.g. a click on a message
    /// that does not exist yet.
    Unresolved {
        index: usize,
        at: Timestamp,
        reason: String,
    },
}

impl Delivery {
    pub fn at(&self) -> Timestamp {
        match self {
            Delivery::Event { event, .. } => event.at(),
            Delivery::Command { at, .. } | Delivery::Unresolved { at, .. } => *at,
        }
    }
}

/// Stream-style reader over a scenario. Behaviors are resolved against the
/// platform lazily, so a click sees every message acknowledged before it.
pub struct ScenarioCursor<'a> {
    scenario: &'a SimScenario,
    next: usize,
    rng: ChaCha8Rng,
    last_at: Timestamp,
}

impl<'a> ScenarioCursor<'a> {
    pub fn new(scenario: &'a SimScenario) -> Self {
        Self {
            scenario,
            next: 0,
            rng: ChaCha8Rng::seed_from_u64(scenario.seed ^ EVENT_STREAM_SALT),
            last_at: scenario.epoch,
        }
    }

    pub fn next_delivery(&mut self, platform: &SimPlatform) -> Option<Delivery> {
        self.next_delivery_with(|m, b, at| platform.apply(m, b, at))
    }

    /// Like [`ScenarioCursor::next_delivery`], turning member behaviors into
    /// events through `apply` (e.g. [`SimPlatform::inject_at`] to feed a
    /// live engine).
    pub fn next_delivery_with(
        &mut self,
        apply: impl FnOnce(&MemberId, &Behavior, Timestamp) -> Result<ChatEvent, GatewayError>,
    ) -> Option<Delivery> {
        let index = self.next;
        let entry = self.scenario.script.get(index)?;
        self.next += 1;
        let scheduled = self.scenario.at(entry.at_ms);
        let delivery = match &entry.step {
            Step::Member { member, behavior } => {
                let (lo, hi) = self.scenario.latency_jitter_ms;
                let jitter = self.rng.random_range(lo..=hi);
                let at = (scheduled + Duration::milliseconds(jitter as i64)).max(self.last_at);
                match apply(member, behavior, at) {
                    Ok(event) => Delivery::Event { index, event },
                    Err(e) => Delivery::Unresolved {
                        index,
                        at,
                        reason: e.to_string(),
                    },
                }
            }
            Step::Instructor { actor, command } => Delivery::Command {
                index,
                at: scheduled.max(self.last_at),
                actor: actor.clone(),
                command: command.clone(),
            },
        };
        self.last_at = delivery.at();
        Some(delivery)
    }

    /// Next platform event, executing nothing for interleaved commands.
    pub fn next_event(&mut self, platform: &SimPlatform) -> Option<ChatEvent> {
        loop {
            match self.next_delivery(platform)? {
                Delivery::Event { event, .. } => return Some(event),
                _ => continue,
            }
        }
    }
}

/// The engine side of a scenario run.
pub trait ScenarioHookup {
    /// Called before every delivery and once at the end with the scenario
    /// clock; the place for timers and sweeps.
    fn tick(&mut self, now: Timestamp);

    fn event(&mut self, event: &ChatEvent);

    fn command(&mut self, at: Timestamp, actor: &str, command: &CommandKind) -> Result<(), String>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatencySummary {
    pub samples: usize,
    pub p50_ms: f64,
    pub p95_ms: f64,
    pub max_ms: f64,
}

impl LatencySummary {
    pub fn from_samples(samples: &[f64]) -> Self {
        let mut sorted = samples.to_vec();
        sorted.sort_by(f64::total_cmp);
        Self {
            samples: sorted.len(),
            p50_ms: percentile(&sorted, 50.0),
            p95_ms: percentile(&sorted, 95.0),
            max_ms: sorted.last().copied().unwrap_or(0.0),
        }
    }
}

/// Nearest-rank percentile of an ascending slice; 0 for an empty one.
pub fn percentile(sorted: &[f64], p: f64) -> f64 {
    if sorted.is_empty() {
        return 0.0;
    }
    let rank = ((p / 100.0) * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntryIssue {
    pub index: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimReport {
    pub seed: u64,
    pub events_emitted: usize,
    pub commands_executed: usize,
    pub command_errors: Vec<EntryIssue>,
    pub unresolved: Vec<EntryIssue>,
    pub actions_received: usize,
    pub per_action_latency: LatencySummary,
}

/// Plays `scenario` against `platform`, handing events and commands to
/// `hookup` in script order.
pub fn run_scenario(
    scenario: &SimScenario,
    platform: &SimPlatform,
    hookup: &mut dyn ScenarioHookup,
) -> Result<SimReport, ScenarioError> {
    scenario.validate()?;
    let mut cursor = ScenarioCursor::new(scenario);
    let mut report = SimReport {
        seed: scenario.seed,
        events_emitted: 0,
        commands_executed: 0,
        command_errors: Vec::new(),
        unresolved: Vec::new(),
        actions_received: 0,
        per_action_latency: LatencySummary::from_samples(&[]),
    };
    let mut last = scenario.epoch;
    while let Some(d) = cursor.next_delivery(platform) {
        last = d.at();
        hookup.tick(last);
        match d {
            Delivery::Event { event, .. } => {
                report.events_emitted += 1;
                hookup.event(&event);
            }
            Delivery::Command {
                index,
                at,
                actor,
                command,
            } => {
                report.commands_executed += 1;
                if let Err(reason) = hookup.command(at, &actor, &command) {
                    report.command_errors.push(EntryIssue { index, reason });
                }
            }
            Delivery::Unresolved { index, reason, .. } => {
                report.unresolved.push(EntryIssue { index, reason });
            }
        }
    }
    if let Some(end) = scenario.end_ms {
        hookup.tick(scenario.at(end).max(last));
    }
    let latencies = platform.latencies();
    report.actions_received = latencies.len();
    report.per_action_latency = LatencySummary::from_samples(&latencies);
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::Group;
    use crate::gateway::ChatGateway;

    fn guild() -> GuildSpec {
        GuildSpec {
            guild_id: "guild".into(),
            channels: vec!["lecture".into()],
            members: vec![MemberSpec::new("s1", "Ada"), MemberSpec::new("s2", "Brian")],
            roles: vec![],
            admin_role_id: "admin".into(),
            groups: vec![Group::new("g1", "lecture")],
        }
    }

    #[derive(Default)]
    struct Recorder {
        events: Vec<ChatEvent>,
        commands: usize,
    }

    impl ScenarioHookup for Recorder {
        fn tick(&mut self, _now: Timestamp) {}
        fn event(&mut self, event: &ChatEvent) {
            self.events.push(event.clone());
        }
        fn command(&mut self, _: Timestamp, _: &str, _: &CommandKind) -> Result<(), String> {
            self.commands += 1;
            Ok(())
        }
    }

    #[test]
    fn single_dm_becomes_direct_message() {
        let mut sc = SimScenario::new(3, guild());
        sc.push(ScriptEntry::member(100, "s1", Behavior::dm("1423")));
        let p = sc.platform().unwrap();
        let mut cur = ScenarioCursor::new(&sc);
        match cur.next_event(&p).unwrap() {
            ChatEvent::DirectMessage { member_id, text, at } => {
                assert_eq!(member_id.as_str(), "s1");
                assert_eq!(text, "1423");
                let offset = (at - sc.epoch).num_milliseconds();
                assert!((100 + 5..=100 + 40).contains(&offset), "{offset}");
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(cur.next_event(&p).is_none());
    }

    #[test]
    fn empty_scenario_terminates_immediately() {
        let sc = SimScenario::new(3, guild());
        let p = sc.platform().unwrap();
        assert!(ScenarioCursor::new(&sc).next_delivery(&p).is_none());
        let report = run_scenario(&sc, &p, &mut Recorder::default()).unwrap();
        assert_eq!(report.events_emitted, 0);
        assert_eq!(report.actions_received, 0);
    }

    fn clicks_scenario(seed: u64) -> SimScenario {
        let mut sc = SimScenario::new(seed, guild());
        sc.push(ScriptEntry::member(50, "s2", Behavior::click_in("ok", "lecture")));
        sc.push(ScriptEntry::member(50, "s1", Behavior::click_in("ok", "lecture")));
        sc.push(ScriptEntry::member(50, "s2", Behavior::GoOffline));
        sc
    }

    fn replay(sc: &SimScenario) -> (String, Vec<ChatEvent>) {
        let p = sc.platform().unwrap();
        p.submit(crate::gateway::ChatAction::PostMessage {
            channel_id: "lecture".into(),
            text: "pick".into(),
            buttons: vec![crate::gateway::Button::new("ok", "OK")],
        })
        .unwrap();
        let mut rec = Recorder::default();
        run_scenario(sc, &p, &mut rec).unwrap();
        (p.event_log_jsonl(), rec.events)
    }

    #[test]
    fn equal_offsets_keep_script_order_and_replay_identically() {
        let sc = clicks_scenario(11);
        let (a_log, a) = replay(&sc);
        let (b_log, b) = replay(&sc);
        assert_eq!(a_log, b_log);
        assert_eq!(a, b);
        let who: Vec<_> = a.iter().map(|e| e.member().unwrap().to_string()).collect();
        assert_eq!(who, ["s2", "s1", "s2"]);
        assert!(a.windows(2).all(|w| w[0].at() <= w[1].at()));
    }

    #[test]
    fn unresolved_clicks_produce_no_event() {
        let mut sc = SimScenario::new(1, guild());
        sc.push(ScriptEntry::member(10, "s1", Behavior::click("nothing")));
        sc.push(ScriptEntry::member(20, "s1", Behavior::dm("hi")));
        let p = sc.platform().unwrap();
        let mut rec = Recorder::default();
        let report = run_scenario(&sc, &p, &mut rec).unwrap();
        assert_eq!(report.events_emitted, 1);
        assert_eq!(report.unresolved.len(), 1);
        assert_eq!(report.unresolved[0].index, 0);
    }

    #[test]
    fn jsonl_roundtrip_and_line_numbers() {
        let mut sc = clicks_scenario(5);
        sc.push(ScriptEntry::command(
            60,
            "k1",
            CommandKind::StartAttendance {
                group_id: "g1".into(),
                code: "1423".into(),
            },
        ));
        let text = sc.to_jsonl();
        assert_eq!(SimScenario::parse_jsonl(&text).unwrap(), sc);

        let mut lines: Vec<&str> = text.lines().collect();
        lines[2] = "{\"at_ms\": 1, \"member\": \"s1\", \"behavior\": \"teleport\"}";
        let err = SimScenario::parse_jsonl(&lines.join("\n")).unwrap_err();
        assert!(matches!(err, ScenarioError::Line { line: 3, .. }), "{err}");

        let mut bad = sc.clone();
        bad.script[1].at_ms = 10;
        let err = SimScenario::parse_jsonl(&bad.to_jsonl()).unwrap_err();
        assert!(matches!(err, ScenarioError::Line { line: 3, .. }), "{err}");
        assert!(err.to_string().contains("entry 1"));
    }

    #[test]
    fn unknown_member_names_entry() {
        let mut sc = SimScenario::new(1, guild());
        sc.push(ScriptEntry::member(10, "ghost", Behavior::dm("hi")));
        let err = sc.validate().unwrap_err();
        assert!(matches!(err, ScenarioError::Entry { index: 0, .. }));
    }

    #[test]
    fn percentile_nearest_rank() {
        let xs: Vec<f64> = (1..=100).map(f64::from).collect();
        assert_eq!(percentile(&xs, 50.0), 50.0);
        assert_eq!(percentile(&xs, 95.0), 95.0);
        assert_eq!(percentile(&[7.0], 95.0), 7.0);
        assert_eq!(percentile(&[], 95.0), 0.0);
    }
}
