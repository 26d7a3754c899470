use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::domain::{
    ChannelId, FeedbackId, GroupId, MemberId, ResponseType, RoleId, SurveyId,
};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuestionSpec {
    pub prompt: String,
    pub response_type: ResponseType,
}

/// Instructor-issued operation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum CommandKind {
    StartAttendance {
        group_id: GroupId,
        code: String,
    },
    StopAttendance {
        group_id: GroupId,
    },
    CreateSimpleSurvey {
        channel_id: ChannelId,
        question: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        duration_secs: Option<u64>,
    },
    CreateComplexSurvey {
        channel_id: ChannelId,
        title: String,
        questions: Vec<QuestionSpec>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        duration_secs: Option<u64>,
    },
    CloseSurvey {
        survey_id: SurveyId,
    },
    StartFeedback {
        channel_id: ChannelId,
        label: String,
    },
    CloseFeedback {
        feedback_id: FeedbackId,
    },
    Ping,
    SendGreeting {
        member_id: MemberId,
        text: String,
    },
    GiveRole {
        member_id: MemberId,
        role_id: RoleId,
    },
    ClearMessages {
        channel_id: ChannelId,
        count: u32,
    },
}

impl CommandKind {
    /// Audit action name.
    pub fn action(&self) -> &'static str {
        match self {
            CommandKind::StartAttendance { .. } => "attendance.start",
            CommandKind::StopAttendance { .. } => "attendance.stop",
            CommandKind::CreateSimpleSurvey { .. } => "survey.create_simple",
            CommandKind::CreateComplexSurvey { .. } => "survey.create_complex",
            CommandKind::CloseSurvey { .. } => "survey.close",
            CommandKind::StartFeedback { .. } => "feedback.start",
            CommandKind::CloseFeedback { .. } => "feedback.close",
            CommandKind::Ping => "command.ping",
            CommandKind::SendGreeting { .. } => "command.send_message",
            CommandKind::GiveRole { .. } => "command.give_role",
            CommandKind::ClearMessages { .. } => "command.clear_messages",
        }
    }

    /// Parameters worth keeping in the audit trail.
    pub fn audit_params(&self) -> Vec<(&'static str, String)> {
        match self {
            CommandKind::StartAttendance { group_id, code } => {
                vec![("group_id", group_id.to_string()), ("code", code.clone())]
            }
            CommandKind::StopAttendance { group_id } => vec![("group_id", group_id.to_string())],
            CommandKind::CreateSimpleSurvey {
                channel_id,
                duration_secs,
                ..
            } => {
                let mut p = vec![("channel_id", channel_id.to_string())];
                if let Some(d) = duration_secs {
                    p.push(("duration_secs", d.to_string()));
                }
                p
            }
            CommandKind::CreateComplexSurvey {
                channel_id,
                questions,
                duration_secs,
                ..
            } => {
                let mut p = vec![
                    ("channel_id", channel_id.to_string()),
                    ("questions", questions.len().to_string()),
                ];
                if let Some(d) = duration_secs {
                    p.push(("duration_secs", d.to_string()));
                }
                p
            }
            CommandKind::CloseSurvey { survey_id } => vec![("survey_id", survey_id.to_string())],
            CommandKind::StartFeedback { channel_id, .. } => {
                vec![("channel_id", channel_id.to_string())]
            }
            CommandKind::CloseFeedback { feedback_id } => {
                vec![("feedback_id", feedback_id.to_string())]
            }
            CommandKind::Ping => vec![],
            CommandKind::SendGreeting { member_id, .. } => {
                vec![("member_id", member_id.to_string())]
            }
            CommandKind::GiveRole { member_id, role_id } => vec![
                ("member_id", member_id.to_string()),
                ("role_id", role_id.to_string()),
            ],
            CommandKind::ClearMessages { channel_id, count } => vec![
                ("channel_id", channel_id.to_string()),
                ("count", count.to_string()),
            ],
        }
    }
}

/// A command together with the API key id that issued it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Command {
    pub actor: String,
    #[serde(flatten)]
    pub kind: CommandKind,
}

impl Command {
    pub fn new(actor: impl Into<String>, kind: CommandKind) -> Self {
        Self {
            actor: actor.into(),
            kind,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommandResult {
    pub message: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data: Option<Value>,
}

impl CommandResult {
    pub(crate) fn new(message: impl Into<String>, data: Value) -> Self {
        Self {
            message: message.into(),
            data: Some(data),
        }
    }
}
