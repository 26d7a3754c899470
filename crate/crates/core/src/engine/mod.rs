//! Chat-side state machines for attendance, surveys, feedback and utility
//! commands.
//!
//! [`Engine`] is a plain synchronous value: every method takes the current
//! time explicitly, which keeps replays exact. [`EngineHandle`] wraps one in
//! a dedicated thread fed by a single ordered queue of commands and platform
//! events, which is how the server runs it.

mod commands;
mod machine;
mod replay;
mod runtime;
mod sinks;
mod state;

use std::collections::BTreeMap;

use crate::domain::{ChannelId, DomainError, GuildId, RoleId, TokenRef};
use crate::gateway::GatewayError;

pub use commands::{Command, CommandKind, CommandResult, QuestionSpec};
pub use machine::{Engine, DIALOG_IDLE_TIMEOUT, TALLY_EDIT_INTERVAL};
pub use replay::{replay, EngineHookup, Replay};
pub use runtime::{ChangeHook, DispatchError, EngineHandle, EventSender, ACK_DEADLINE};
pub use sinks::{AuditSink, ExportSink, MemoryAudit, MemoryExports, NullAudit};
pub use state::{
    Counters, Dialog, DialogStatus, EngineState, FeedbackRecord, FeedbackResults, MessageOwner,
    QuestionResult, SurveyRecord, SurveyResults, TallyThrottle,
};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum EngineError {
    #[error("{0}")]
    Conflict(String),
    #[error("{0}")]
    NotFound(String),
    #[error("{0}")]
    InvalidInput(String),
    #[error("chat platform unavailable: {0}")]
    Unavailable(String),
    #[error("internal error: {0}")]
    Internal(String),
}

impl From<GatewayError> for EngineError {
    fn from(e: GatewayError) -> Self {
        match e {
            GatewayError::NotFound(what) => EngineError::NotFound(format!("unknown {what}")),
            GatewayError::Unavailable(why) => EngineError::Unavailable(why),
            GatewayError::InvalidAction(why) => EngineError::InvalidInput(why),
        }
    }
}

impl From<DomainError> for EngineError {
    fn from(e: DomainError) -> Self {
        match e {
            DomainError::SessionClosed(_) | DomainError::InvalidTransition { .. } => {
                EngineError::Conflict(e.to_string())
            }
            _ => EngineError::InvalidInput(e.to_string()),
        }
    }
}

/// Settings shared by every command of one bot instance. Instructor commands
/// run as if issued by a member holding `admin_role_id`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EngineContext {
    pub server_url: String,
    pub api_token_ref: TokenRef,
    pub guild_id: GuildId,
    /// Purpose (e.g. `announcements`) to channel.
    pub default_channels: BTreeMap<String, ChannelId>,
    pub runtime_flags: BTreeMap<String, String>,
    pub admin_role_id: RoleId,
}

impl EngineContext {
    pub fn validate(&self) -> Result<(), EngineError> {
        if self.guild_id.is_empty() {
            return Err(EngineError::InvalidInput("engine context needs a guild".into()));
        }
        if self.admin_role_id.is_empty() {
            return Err(EngineError::InvalidInput(
                "engine context needs an admin role".into(),
            ));
        }
        Ok(())
    }
}
