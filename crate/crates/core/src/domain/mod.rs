//! Domain types shared by the engine, the REST layer and persistence.
//!
//! Everything here is a plain value: cheap to clone, safe to send across
//! threads, and free of I/O.

mod attendance;
mod audit;
mod auth;
mod bot;
mod feedback;
mod histogram;
mod ids;
mod presence;
mod survey;

pub use attendance::{
    validate_attendance_code, AttendanceCode, AttendanceSession, AttendanceSummary, CheckIn,
    CheckInOutcome, Group, SessionState,
};
pub use audit::{AuditEvent, Outcome, REDACTED};
pub use auth::{ApiKey, RawApiKey};
pub use bot::{BotInstance, BotMode, BotState, TokenRef};
pub use feedback::{FeedbackResponse, FeedbackSession, SATISFACTION_LABELS};
pub use histogram::{Bucket, Histogram};
pub use ids::{
    BotId, ChannelId, FeedbackId, GroupId, GuildId, MemberId, MessageRef, RoleId, SessionId,
    SurveyId,
};
pub use presence::{presence_of, OnlineState, PresenceSnapshot};
pub use survey::{
    aggregate_survey, normalize_free_text, Question, ResponseType, ResponseValue, SurveyDefinition,
    SurveyKind, SurveyResponse, SurveyState, DIFFICULTY_LABELS, PERCENTAGE_BUCKETS,
};

pub use crate::clock::Timestamp;

/// Validation and state errors raised by domain types.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum DomainError {
    #[error("invalid attendance code {0:?}: expected exactly 4 digits")]
    InvalidCode(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("session {0} is closed")]
    SessionClosed(String),
    #[error("invalid state transition from {from} to {to}")]
    InvalidTransition { from: String, to: String },
}
