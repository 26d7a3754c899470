//! Action/event wire model between the interaction engine and a chat
//! platform.
//!
//! The engine talks to a platform through [`ChatGateway::submit`] and
//! consumes a single ordered stream of [`ChatEvent`]s per bot instance.
//! [`SimPlatform`] is the in-process reference implementation used by the
//! server, the scenario runner and the tests.
//!
//! A production adapter for a real chat service implements the same trait
//! and additionally owns the connection lifecycle: connect, detect a dropped
//! session, reconnect with exponential backoff, and resume event delivery
//! from where the stream stopped. While it is disconnected `submit` returns
//! [`GatewayError::Unavailable`], which callers may retry. No such adapter
//! ships in this crate.

mod scenario;
mod sim;

use serde::{Deserialize, Serialize};

use crate::domain::{ChannelId, MemberId, MessageRef, PresenceSnapshot, RoleId, Timestamp};

pub use scenario::{
    percentile, run_scenario, Behavior, Delivery, LatencySummary, ScenarioCursor,
    ScenarioError, ScenarioHookup, ScriptEntry, SimReport, SimScenario, Step, DEFAULT_EPOCH,
};
pub use scenario::EntryIssue;
pub use sim::{ActionRecord, GuildSpec, MemberInfo, MemberSpec, MessageLocation, SimPlatform, StoredMessage};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Button {
    pub id: String,
    pub label: String,
}

impl Button {
    pub fn new(id: impl Into<String>, label: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            label: label.into(),
        }
    }
}

/// Something the engine asks the platform to do.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ChatAction {
    PostMessage {
        channel_id: ChannelId,
        text: String,
        #[serde(default)]
        buttons: Vec<Button>,
    },
    #[serde(rename = "send_dm")]
    SendDm {
        member_id: MemberId,
        text: String,
        #[serde(default)]
        buttons: Vec<Button>,
    },
    EditMessage {
        message_ref: MessageRef,
        text: String,
        #[serde(default)]
        buttons: Vec<Button>,
    },
    DeleteMessages {
        channel_id: ChannelId,
        count: u32,
    },
    AssignRole {
        member_id: MemberId,
        role_id: RoleId,
    },
    QueryPresence {},
}

impl ChatAction {
    pub fn kind(&self) -> &'static str {
        match self {
            ChatAction::PostMessage { .. } => "post_message",
            ChatAction::SendDm { .. } => "send_dm",
            ChatAction::EditMessage { .. } => "edit_message",
            ChatAction::DeleteMessages { .. } => "delete_messages",
            ChatAction::AssignRole { .. } => "assign_role",
            ChatAction::QueryPresence {} => "query_presence",
        }
    }

    /// Checks the shape invariants: unique button ids per message and a
    /// positive delete count.
    pub fn validate(&self) -> Result<(), GatewayError> {
        match self {
            ChatAction::PostMessage { buttons, .. }
            | ChatAction::SendDm { buttons, .. }
            | ChatAction::EditMessage { buttons, .. } => {
                let mut seen = std::collections::BTreeSet::new();
                for b in buttons {
                    if !seen.insert(b.id.as_str()) {
                        return Err(GatewayError::InvalidAction(format!(
                            "duplicate button id {:?}",
                            b.id
                        )));
                    }
                }
                Ok(())
            }
            ChatAction::DeleteMessages { count, .. } if *count == 0 => Err(
                GatewayError::InvalidAction("delete count must be at least 1".into()),
            ),
            _ => Ok(()),
        }
    }
}

/// Platform acknowledgement of a submitted action.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct ActionAck {
    /// Set for posted messages and DMs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub message_ref: Option<MessageRef>,
    /// Number of messages actually removed by `DeleteMessages`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub deleted: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub presence: Option<PresenceSnapshot>,
    /// Round trip reported by the platform.
    pub latency_ms: f64,
}

/// Something that happened on the platform.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ChatEvent {
    ChannelMessage {
        channel_id: ChannelId,
        member_id: MemberId,
        text: String,
        at: Timestamp,
    },
    DirectMessage {
        member_id: MemberId,
        text: String,
        at: Timestamp,
    },
    ButtonClick {
        message_ref: MessageRef,
        member_id: MemberId,
        button_id: String,
        at: Timestamp,
    },
    PresenceReport {
        snapshot: PresenceSnapshot,
        at: Timestamp,
    },
    MemberStateChange {
        member_id: MemberId,
        online: bool,
        at: Timestamp,
    },
}

impl ChatEvent {
    pub fn at(&self) -> Timestamp {
        match self {
            ChatEvent::ChannelMessage { at, .. }
            | ChatEvent::DirectMessage { at, .. }
            | ChatEvent::ButtonClick { at, .. }
            | ChatEvent::PresenceReport { at, .. }
            | ChatEvent::MemberStateChange { at, .. } => *at,
        }
    }

    pub fn member(&self) -> Option<&MemberId> {
        match self {
            ChatEvent::ChannelMessage { member_id, .. }
            | ChatEvent::DirectMessage { member_id, .. }
            | ChatEvent::ButtonClick { member_id, .. }
            | ChatEvent::MemberStateChange { member_id, .. } => Some(member_id),
            ChatEvent::PresenceReport { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum GatewayError {
    #[error("not found: {0}")]
    NotFound(String),
    #[error("chat platform unavailable: {0}")]
    Unavailable(String),
    #[error("invalid action: {0}")]
    InvalidAction(String),
}

/// Connection to a chat platform. `submit` may be called from any thread.
pub trait ChatGateway: Send + Sync {
    fn submit(&self, action: ChatAction) -> Result<ActionAck, GatewayError>;

    /// Looks up a guild member.
    fn member(&self, id: &MemberId) -> Option<MemberInfo>;
}
