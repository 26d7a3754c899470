//! Serializable engine state and the read models derived from it.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::clock::Timestamp;
use crate::domain::{
    aggregate_survey, AttendanceSession, FeedbackId, FeedbackSession, Group, GroupId, Histogram,
    MemberId, MessageRef, ResponseType, SessionId, SessionState, SurveyDefinition, SurveyId,
    SurveyKind, SurveyResponse, SurveyState,
};

/// Last-used sequence numbers for generated ids.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counters {
    pub attendance: u32,
    pub survey: u32,
    pub feedback: u32,
}

/// Live-tally edit bookkeeping for a simple survey message.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TallyThrottle {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub last_edit_at: Option<Timestamp>,
    /// Responses arrived since the last edit.
    #[serde(default)]
    pub pending: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SurveyRecord {
    pub definition: SurveyDefinition,
    /// At most one response per (question, student); later answers replace
    /// earlier ones.
    #[serde(default)]
    pub responses: Vec<SurveyResponse>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub message_ref: Option<MessageRef>,
    #[serde(default)]
    pub tally: TallyThrottle,
}

impl SurveyRecord {
    pub fn responses_to(&self, question: usize) -> Vec<SurveyResponse> {
        self.responses
            .iter()
            .filter(|r| r.question_index == question)
            .cloned()
            .collect()
    }

    /// Stores a response, replacing the student's previous answer to the same
    /// question. Returns whether something was replaced.
    pub(crate) fn upsert(&mut self, response: SurveyResponse) -> bool {
        match self.responses.iter_mut().find(|r| {
            r.question_index == response.question_index && r.student_id == response.student_id
        }) {
            Some(slot) => {
                *slot = response;
                true
            }
            None => {
                self.responses.push(response);
                false
            }
        }
    }

    pub fn results(&self) -> SurveyResults {
        let questions = self
            .definition
            .questions
            .iter()
            .map(|q| {
                let responses = self.responses_to(q.index);
                QuestionResult {
                    index: q.index,
                    prompt: q.prompt.clone(),
                    response_type: q.response_type,
                    histogram: aggregate_survey(&responses, q)
                        .expect("stored responses always match their question"),
                }
            })
            .collect();
        let mut respondents: Vec<&MemberId> = self.responses.iter().map(|r| &r.student_id).collect();
        respondents.sort();
        respondents.dedup();
        SurveyResults {
            survey_id: self.definition.id.clone(),
            kind: self.definition.kind,
            title: self.definition.title.clone(),
            state: self.definition.state,
            respondents: respondents.len(),
            questions,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DialogStatus {
    Active,
    Completed,
    Expired,
}

/// One student's walk through a complex survey in direct messages.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dialog {
    pub survey_id: SurveyId,
    pub member_id: MemberId,
    /// Index of the question currently awaiting an answer.
    pub next_question: usize,
    pub last_activity: Timestamp,
    pub status: DialogStatus,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeedbackRecord {
    pub session: FeedbackSession,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub message_ref: Option<MessageRef>,
}

impl FeedbackRecord {
    pub fn results(&self) -> FeedbackResults {
        FeedbackResults {
            feedback_id: self.session.id.clone(),
            label: self.session.label.clone(),
            state: self.session.state,
            histogram: self.session.histogram(),
        }
    }
}

/// What a bot message with buttons belongs to.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MessageOwner {
    AttendancePrompt {
        session_id: SessionId,
    },
    SimpleSurvey {
        survey_id: SurveyId,
    },
    Participate {
        survey_id: SurveyId,
    },
    Feedback {
        feedback_id: FeedbackId,
    },
    DialogQuestion {
        survey_id: SurveyId,
        member_id: MemberId,
        index: usize,
    },
}

/// Everything the engine knows. Plain data, so it can be persisted and
/// compared between replays.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EngineState {
    #[serde(default)]
    pub groups: BTreeMap<GroupId, Group>,
    #[serde(default)]
    pub counters: Counters,
    #[serde(default)]
    pub sessions: BTreeMap<SessionId, AttendanceSession>,
    #[serde(default)]
    pub surveys: BTreeMap<SurveyId, SurveyRecord>,
    #[serde(default)]
    pub dialogs: Vec<Dialog>,
    #[serde(default)]
    pub feedback: BTreeMap<FeedbackId, FeedbackRecord>,
    /// Keyed by message ref.
    #[serde(default)]
    pub messages: BTreeMap<u64, MessageOwner>,
}

impl EngineState {
    pub fn open_session_for(&self, group: &GroupId) -> Option<&AttendanceSession> {
        self.sessions
            .values()
            .find(|s| &s.group_id == group && s.state == SessionState::Open)
    }

    pub fn dialog(&self, survey: &SurveyId, member: &MemberId) -> Option<&Dialog> {
        self.dialogs
            .iter()
            .find(|d| &d.survey_id == survey && &d.member_id == member)
    }

    pub(crate) fn dialog_mut(&mut self, survey: &SurveyId, member: &MemberId) -> Option<&mut Dialog> {
        self.dialogs
            .iter_mut()
            .find(|d| &d.survey_id == survey && &d.member_id == member)
    }

    /// The member's active dialog in a still-open survey, if any.
    pub fn active_dialog_of(&self, member: &MemberId) -> Option<&Dialog> {
        self.dialogs.iter().find(|d| {
            &d.member_id == member
                && d.status == DialogStatus::Active
                && self
                    .surveys
                    .get(&d.survey_id)
                    .is_some_and(|s| s.definition.state == SurveyState::Open)
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionResult {
    pub index: usize,
    pub prompt: String,
    pub response_type: ResponseType,
    pub histogram: Histogram,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurveyResults {
    pub survey_id: SurveyId,
    pub kind: SurveyKind,
    pub title: String,
    pub state: SurveyState,
    pub respondents: usize,
    pub questions: Vec<QuestionResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedbackResults {
    pub feedback_id: FeedbackId,
    pub label: String,
    pub state: SessionState,
    pub histogram: Histogram,
}
