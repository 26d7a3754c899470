//! Deterministic in-process chat platform.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::{Arc, Mutex};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{ActionAck, Behavior, Button, ChatAction, ChatEvent, ChatGateway, GatewayError};
use crate::clock::{Clock, SystemClock, Timestamp};
use crate::domain::{
    presence_of, ChannelId, Group, GuildId, MemberId, MessageRef, OnlineState, PresenceSnapshot,
    RoleId,
};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MemberSpec {
    pub id: MemberId,
    #[serde(default)]
    pub display_name: String,
    #[serde(default = "default_true")]
    pub online: bool,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub roles: Vec<RoleId>,
}

fn default_true() -> bool {
    true
}

impl MemberSpec {
    pub fn new(id: impl Into<MemberId>, display_name: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            display_name: display_name.into(),
            online: true,
            roles: Vec::new(),
        }
    }

    pub fn offline(mut self) -> Self {
        self.online = false;
        self
    }
}

/// Static description of a simulated guild.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GuildSpec {
    pub guild_id: GuildId,
    pub channels: Vec<ChannelId>,
    #[serde(default)]
    pub members: Vec<MemberSpec>,
    #[serde(default)]
    pub roles: Vec<RoleId>,
    pub admin_role_id: RoleId,
    #[serde(default)]
    pub groups: Vec<Group>,
}

impl GuildSpec {
    pub fn validate(&self) -> Result<(), String> {
        if self.guild_id.is_empty() {
            return Err("guild_id must not be empty".into());
        }
        if self.admin_role_id.is_empty() {
            return Err("admin_role_id must not be empty".into());
        }
        let mut channels = BTreeSet::new();
        for c in &self.channels {
            if c.is_empty() || !channels.insert(c) {
                return Err(format!("channel id {c:?} is empty or duplicated"));
            }
        }
        let mut members = BTreeSet::new();
        for m in &self.members {
            if m.id.is_empty() || !members.insert(&m.id) {
                return Err(format!("member id {:?} is empty or duplicated", m.id.as_str()));
            }
        }
        let roles: BTreeSet<_> = self.roles.iter().chain([&self.admin_role_id]).collect();
        for m in &self.members {
            if let Some(r) = m.roles.iter().find(|r| !roles.contains(r)) {
                return Err(format!("member {} has unknown role {r}", m.id));
            }
        }
        let mut groups = BTreeSet::new();
        for g in &self.groups {
            g.validate().map_err(|e| e.to_string())?;
            if !groups.insert(&g.id) {
                return Err(format!("group id {} is duplicated", g.id));
            }
            if !channels.contains(&g.channel_id) {
                return Err(format!("group {} refers to unknown channel {}", g.id, g.channel_id));
            }
            if let Some(m) = g.roster.iter().find(|m| !members.contains(m)) {
                return Err(format!("group {} roster has unknown member {m}", g.id));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MemberInfo {
    pub id: MemberId,
    pub display_name: String,
    pub online: bool,
    pub roles: BTreeSet<RoleId>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MessageLocation {
    Channel(ChannelId),
    Dm(MemberId),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StoredMessage {
    pub message_ref: MessageRef,
    pub location: MessageLocation,
    pub text: String,
    pub buttons: Vec<Button>,
    pub edits: u32,
    pub deleted: bool,
}

impl StoredMessage {
    fn has_button(&self, id: &str) -> bool {
        !self.deleted && self.buttons.iter().any(|b| b.id == id)
    }
}

/// Accepted action with the latency the platform reported for it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionRecord {
    pub action: ChatAction,
    pub latency_ms: f64,
}

type EventSink = Box<dyn Fn(ChatEvent) + Send + Sync>;

struct SimState {
    channels: BTreeMap<ChannelId, Vec<MessageRef>>,
    messages: BTreeMap<MessageRef, StoredMessage>,
    members: BTreeMap<MemberId, MemberInfo>,
    roles: BTreeSet<RoleId>,
    next_ref: u64,
    available: bool,
    rng: ChaCha8Rng,
    jitter_ms: (u64, u64),
    actions: Vec<ActionRecord>,
    events: Vec<ChatEvent>,
    last_event_at: Option<Timestamp>,
}

/// Simulated guild: channels, members, DMs and buttons, all in memory.
///
/// Message refs are consecutive integers starting at 1 and action latencies
/// are drawn from a ChaCha8 stream seeded by the caller, so two platforms
/// built from the same guild and seed behave identically under the same
/// inputs.
pub struct SimPlatform {
    guild_id: GuildId,
    state: Mutex<SimState>,
    sink: Mutex<Option<EventSink>>,
    clock: Arc<dyn Clock>,
}

impl SimPlatform {
    pub fn new(guild: &GuildSpec, seed: u64, latency_jitter_ms: (u64, u64)) -> Result<Self, String> {
        guild.validate()?;
        if latency_jitter_ms.0 > latency_jitter_ms.1 {
            return Err(format!(
                "latency jitter range {}..{} is inverted",
                latency_jitter_ms.0, latency_jitter_ms.1
            ));
        }
        let members = guild
            .members
            .iter()
            .map(|m| {
                let display_name = if m.display_name.is_empty() {
                    m.id.to_string()
                } else {
                    m.display_name.clone()
                };
                (
                    m.id.clone(),
                    MemberInfo {
                        id: m.id.clone(),
                        display_name,
                        online: m.online,
                        roles: m.roles.iter().cloned().collect(),
                    },
                )
            })
            .collect();
        let state = SimState {
            channels: guild.channels.iter().map(|c| (c.clone(), Vec::new())).collect(),
            messages: BTreeMap::new(),
            members,
            roles: guild
                .roles
                .iter()
                .chain([&guild.admin_role_id])
                .cloned()
                .collect(),
            next_ref: 1,
            available: true,
            rng: ChaCha8Rng::seed_from_u64(seed),
            jitter_ms: latency_jitter_ms,
            actions: Vec::new(),
            events: Vec::new(),
            last_event_at: None,
        };
        Ok(Self {
            guild_id: guild.guild_id.clone(),
            state: Mutex::new(state),
            sink: Mutex::new(None),
            clock: Arc::new(SystemClock),
        })
    }

    pub fn with_clock(mut self, clock: Arc<dyn Clock>) -> Self {
        self.clock = clock;
        self
    }

    pub fn guild_id(&self) -> &GuildId {
        &self.guild_id
    }

    /// Routes live events (from [`SimPlatform::inject`]) to a consumer.
    pub fn set_event_sink(&self, sink: impl Fn(ChatEvent) + Send + Sync + 'static) {
        *self.sink.lock().unwrap() = Some(Box::new(sink));
    }

    pub fn clear_event_sink(&self) {
        *self.sink.lock().unwrap() = None;
    }

    /// Simulates an outage: while unavailable every submit fails.
    pub fn set_available(&self, available: bool) {
        self.state.lock().unwrap().available = available;
    }

    pub fn is_available(&self) -> bool {
        self.state.lock().unwrap().available
    }

    /// Turns a member behavior into a platform event at time `at` and records
    /// it in the event log. Timestamps are clamped so the log never goes
    /// backwards. Clicks resolve against messages that already exist.
    pub fn apply(
        &self,
        member: &MemberId,
        behavior: &Behavior,
        at: Timestamp,
    ) -> Result<ChatEvent, GatewayError> {
        let mut st = self.state.lock().unwrap();
        Self::apply_locked(&mut st, member, behavior, at)
    }

    /// Live variant of [`SimPlatform::apply`]: stamps the event with the
    /// platform clock and hands it to the event sink.
    pub fn inject(&self, member: &MemberId, behavior: &Behavior) -> Result<ChatEvent, GatewayError> {
        self.inject_at(member, behavior, self.clock.now())
    }

    /// Like [`SimPlatform::inject`] with an explicit timestamp.
    pub fn inject_at(
        &self,
        member: &MemberId,
        behavior: &Behavior,
        at: Timestamp,
    ) -> Result<ChatEvent, GatewayError> {
        let mut st = self.state.lock().unwrap();
        let ev = Self::apply_locked(&mut st, member, behavior, at)?;
        // Deliver under the state lock so sink order matches log order.
        if let Some(sink) = self.sink.lock().unwrap().as_ref() {
            sink(ev.clone());
        }
        Ok(ev)
    }

    fn apply_locked(
        st: &mut SimState,
        member: &MemberId,
        behavior: &Behavior,
        at: Timestamp,
    ) -> Result<ChatEvent, GatewayError> {
        if !st.members.contains_key(member) {
            return Err(GatewayError::NotFound(format!("member {member}")));
        }
        let at = st.last_event_at.map_or(at, |last| last.max(at));
        let ev = match behavior {
            Behavior::DmText { text } => ChatEvent::DirectMessage {
                member_id: member.clone(),
                text: text.clone(),
                at,
            },
            Behavior::ClickButton {
                button_id,
                channel_id,
                message_ref,
            } => {
                let target = Self::resolve_click(
                    st,
                    member,
                    button_id,
                    channel_id.as_ref(),
                    *message_ref,
                )
                .ok_or_else(|| {
                    GatewayError::NotFound(format!("no message with button {button_id:?}"))
                })?;
                ChatEvent::ButtonClick {
                    message_ref: target,
                    member_id: member.clone(),
                    button_id: button_id.clone(),
                    at,
                }
            }
            Behavior::GoOffline | Behavior::GoOnline => {
                let online = matches!(behavior, Behavior::GoOnline);
                if let Some(m) = st.members.get_mut(member) {
                    m.online = online;
                }
                ChatEvent::MemberStateChange {
                    member_id: member.clone(),
                    online,
                    at,
                }
            }
        };
        st.last_event_at = Some(at);
        st.events.push(ev.clone());
        Ok(ev)
    }

    fn resolve_click(
        st: &SimState,
        member: &MemberId,
        button_id: &str,
        channel: Option<&ChannelId>,
        explicit: Option<MessageRef>,
    ) -> Option<MessageRef> {
        if let Some(r) = explicit {
            let msg = st.messages.get(&r)?;
            let visible = match &msg.location {
                MessageLocation::Channel(_) => true,
                MessageLocation::Dm(to) => to == member,
            };
            // An explicit ref models a stale client view: the button may
            // already be gone from the message.
            return (visible && !msg.deleted).then_some(r);
        }
        if let Some(c) = channel {
            return st
                .channels
                .get(c)?
                .iter()
                .rev()
                .find(|r| st.messages[r].has_button(button_id))
                .copied();
        }
        let dm = st
            .messages
            .values()
            .rev()
            .find(|m| m.location == MessageLocation::Dm(member.clone()) && m.has_button(button_id));
        if let Some(m) = dm {
            return Some(m.message_ref);
        }
        st.messages
            .values()
            .rev()
            .find(|m| matches!(m.location, MessageLocation::Channel(_)) && m.has_button(button_id))
            .map(|m| m.message_ref)
    }

    pub fn presence(&self) -> PresenceSnapshot {
        let st = self.state.lock().unwrap();
        Self::presence_locked(&st)
    }

    fn presence_locked(st: &SimState) -> PresenceSnapshot {
        let states: Vec<OnlineState> = st
            .members
            .values()
            .map(|m| {
                if m.online {
                    OnlineState::Online
                } else {
                    OnlineState::Offline
                }
            })
            .collect();
        presence_of(&states)
    }

    pub fn message(&self, r: MessageRef) -> Option<StoredMessage> {
        self.state.lock().unwrap().messages.get(&r).cloned()
    }

    /// Visible (non-deleted) messages of a channel, oldest first.
    pub fn channel_messages(&self, channel: &ChannelId) -> Vec<StoredMessage> {
        let st = self.state.lock().unwrap();
        st.channels
            .get(channel)
            .map(|refs| {
                refs.iter()
                    .map(|r| &st.messages[r])
                    .filter(|m| !m.deleted)
                    .cloned()
                    .collect()
            })
            .unwrap_or_default()
    }

    /// DMs the bot sent to `member`, oldest first.
    pub fn dms_to(&self, member: &MemberId) -> Vec<StoredMessage> {
        let st = self.state.lock().unwrap();
        st.messages
            .values()
            .filter(|m| m.location == MessageLocation::Dm(member.clone()))
            .cloned()
            .collect()
    }

    pub fn action_log(&self) -> Vec<ActionRecord> {
        self.state.lock().unwrap().actions.clone()
    }

    pub fn event_log(&self) -> Vec<ChatEvent> {
        self.state.lock().unwrap().events.clone()
    }

    /// Event log as JSON Lines, the canonical byte form for replay checks.
    pub fn event_log_jsonl(&self) -> String {
        let st = self.state.lock().unwrap();
        let mut out = String::new();
        for ev in &st.events {
            out.push_str(&serde_json::to_string(ev).expect("events serialize"));
            out.push('\n');
        }
        out
    }

    pub fn latencies(&self) -> Vec<f64> {
        self.state
            .lock()
            .unwrap()
            .actions
            .iter()
            .map(|a| a.latency_ms)
            .collect()
    }

    pub fn member_ids(&self) -> Vec<MemberId> {
        self.state.lock().unwrap().members.keys().cloned().collect()
    }

    pub fn roles_of(&self, member: &MemberId) -> Option<BTreeSet<RoleId>> {
        self.state
            .lock()
            .unwrap()
            .members
            .get(member)
            .map(|m| m.roles.clone())
    }
}

impl ChatGateway for SimPlatform {
    fn submit(&self, action: ChatAction) -> Result<ActionAck, GatewayError> {
        let mut st = self.state.lock().unwrap();
        if !st.available {
            return Err(GatewayError::Unavailable(format!(
                "guild {} is offline",
                self.guild_id
            )));
        }
        action.validate()?;
        let mut ack = ActionAck::default();
        match &action {
            ChatAction::PostMessage {
                channel_id,
                text,
                buttons,
            } => {
                if !st.channels.contains_key(channel_id) {
                    return Err(GatewayError::NotFound(format!("channel {channel_id}")));
                }
                let r = MessageRef(st.next_ref);
                st.next_ref += 1;
                st.messages.insert(
                    r,
                    StoredMessage {
                        message_ref: r,
                        location: MessageLocation::Channel(channel_id.clone()),
                        text: text.clone(),
                        buttons: buttons.clone(),
                        edits: 0,
                        deleted: false,
                    },
                );
                st.channels.get_mut(channel_id).unwrap().push(r);
                ack.message_ref = Some(r);
            }
            ChatAction::SendDm {
                member_id,
                text,
                buttons,
            } => {
                if !st.members.contains_key(member_id) {
                    return Err(GatewayError::NotFound(format!("member {member_id}")));
                }
                let r = MessageRef(st.next_ref);
                st.next_ref += 1;
                st.messages.insert(
                    r,
                    StoredMessage {
                        message_ref: r,
                        location: MessageLocation::Dm(member_id.clone()),
                        text: text.clone(),
                        buttons: buttons.clone(),
                        edits: 0,
                        deleted: false,
                    },
                );
                ack.message_ref = Some(r);
            }
            ChatAction::EditMessage {
                message_ref,
                text,
                buttons,
            } => {
                let msg = st
                    .messages
                    .get_mut(message_ref)
                    .filter(|m| !m.deleted)
                    .ok_or_else(|| GatewayError::NotFound(format!("message {message_ref}")))?;
                msg.text = text.clone();
                msg.buttons = buttons.clone();
                msg.edits += 1;
            }
            ChatAction::DeleteMessages { channel_id, count } => {
                let refs = st
                    .channels
                    .get(channel_id)
                    .ok_or_else(|| GatewayError::NotFound(format!("channel {channel_id}")))?
                    .clone();
                let mut deleted = 0u32;
                for r in refs.iter().rev() {
                    if deleted == *count {
                        break;
                    }
                    let msg = st.messages.get_mut(r).unwrap();
                    if !msg.deleted {
                        msg.deleted = true;
                        deleted += 1;
                    }
                }
                ack.deleted = Some(deleted);
            }
            ChatAction::AssignRole { member_id, role_id } => {
                if !st.roles.contains(role_id) {
                    return Err(GatewayError::NotFound(format!("role {role_id}")));
                }
                let m = st
                    .members
                    .get_mut(member_id)
                    .ok_or_else(|| GatewayError::NotFound(format!("member {member_id}")))?;
                m.roles.insert(role_id.clone());
            }
            ChatAction::QueryPresence {} => {
                ack.presence = Some(Self::presence_locked(&st));
            }
        }
        let (lo, hi) = st.jitter_ms;
        ack.latency_ms = if lo == hi {
            lo as f64
        } else {
            st.rng.random_range(lo as f64..hi as f64)
        };
        st.actions.push(ActionRecord {
            action,
            latency_ms: ack.latency_ms,
        });
        Ok(ack)
    }

    fn member(&self, id: &MemberId) -> Option<MemberInfo> {
        self.state.lock().unwrap().members.get(id).cloned()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn guild() -> GuildSpec {
        GuildSpec {
            guild_id: "guild-1".into(),
            channels: vec!["c1".into(), "c2".into()],
            members: vec![
                MemberSpec::new("s1", "Ada"),
                MemberSpec::new("s2", "Brian"),
                MemberSpec::new("s3", "Chen").offline(),
            ],
            roles: vec!["tutor".into()],
            admin_role_id: "admin".into(),
            groups: vec![Group::new("g1", "c1")],
        }
    }

    fn post(p: &SimPlatform, channel: &str, text: &str) -> MessageRef {
        p.submit(ChatAction::PostMessage {
            channel_id: channel.into(),
            text: text.into(),
            buttons: vec![Button::new("ok", "OK")],
        })
        .unwrap()
        .message_ref
        .unwrap()
    }

    #[test]
    fn post_to_known_channel_acks_with_fresh_refs() {
        let p = SimPlatform::new(&guild(), 1, (5, 40)).unwrap();
        let a = post(&p, "c1", "one");
        let b = post(&p, "c2", "two");
        assert_eq!((a, b), (MessageRef(1), MessageRef(2)));
    }

    #[test]
    fn dm_to_unknown_member_is_not_found() {
        let p = SimPlatform::new(&guild(), 1, (5, 40)).unwrap();
        let err = p
            .submit(ChatAction::SendDm {
                member_id: "ghost".into(),
                text: "hi".into(),
                buttons: vec![],
            })
            .unwrap_err();
        assert!(matches!(err, GatewayError::NotFound(_)));
    }

    #[test]
    fn delete_more_than_present_reports_actual() {
        let p = SimPlatform::new(&guild(), 1, (5, 40)).unwrap();
        for i in 0..3 {
            post(&p, "c1", &format!("m{i}"));
        }
        let before = p.channel_messages(&"c1".into()).len();
        let ack = p
            .submit(ChatAction::DeleteMessages {
                channel_id: "c1".into(),
                count: 5,
            })
            .unwrap();
        let after = p.channel_messages(&"c1".into()).len();
        assert_eq!(ack.deleted, Some((before - after) as u32));
        assert_eq!(ack.deleted, Some(3));
    }

    #[test]
    fn offline_platform_is_unavailable() {
        let p = SimPlatform::new(&guild(), 1, (5, 40)).unwrap();
        p.set_available(false);
        assert!(matches!(
            p.submit(ChatAction::QueryPresence {}),
            Err(GatewayError::Unavailable(_))
        ));
        p.set_available(true);
        let ack = p.submit(ChatAction::QueryPresence {}).unwrap();
        assert_eq!(
            ack.presence,
            Some(PresenceSnapshot { online: 2, offline: 1, total: 3 })
        );
    }

    #[test]
    fn latency_stays_inside_jitter_bounds_and_is_seeded() {
        let a = SimPlatform::new(&guild(), 9, (5, 40)).unwrap();
        let b = SimPlatform::new(&guild(), 9, (5, 40)).unwrap();
        for _ in 0..50 {
            a.submit(ChatAction::QueryPresence {}).unwrap();
            b.submit(ChatAction::QueryPresence {}).unwrap();
        }
        assert_eq!(a.latencies(), b.latencies());
        assert!(a.latencies().iter().all(|l| (5.0..40.0).contains(l)));
    }

    #[test]
    fn clicks_resolve_only_existing_messages() {
        let p = SimPlatform::new(&guild(), 1, (1, 2)).unwrap();
        let click = Behavior::ClickButton {
            button_id: "ok".into(),
            channel_id: Some("c1".into()),
            message_ref: None,
        };
        assert!(p.apply(&"s1".into(), &click, chrono::Utc::now()).is_err());
        let r = post(&p, "c1", "pick");
        match p.apply(&"s1".into(), &click, chrono::Utc::now()).unwrap() {
            ChatEvent::ButtonClick { message_ref, .. } => assert_eq!(message_ref, r),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn assign_role_checks_role_and_member() {
        let p = SimPlatform::new(&guild(), 1, (1, 2)).unwrap();
        p.submit(ChatAction::AssignRole {
            member_id: "s1".into(),
            role_id: "tutor".into(),
        })
        .unwrap();
        assert!(p.roles_of(&"s1".into()).unwrap().contains(&RoleId::from("tutor")));
        assert!(p
            .submit(ChatAction::AssignRole {
                member_id: "s1".into(),
                role_id: "nope".into()
            })
            .is_err());
    }

    #[test]
    fn guild_validation() {
        let mut g = guild();
        g.groups.push(Group::new("g2", "missing"));
        assert!(g.validate().is_err());
        let mut g = guild();
        g.groups[0] = Group::new("g1", "c1").with_roster(["ghost"]);
        assert!(g.validate().is_err());
        assert!(SimPlatform::new(&guild(), 0, (10, 1)).is_err());
    }
}
