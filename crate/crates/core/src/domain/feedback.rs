use serde::{Deserialize, Serialize};

use super::{
    ChannelId, DomainError, FeedbackId, Histogram, MemberId, SessionState, Timestamp,
};

/// Satisfaction scale shown on feedback dialogs, lowest first.
pub const SATISFACTION_LABELS: [&str; 5] = [
    "Very unsatisfied",
    "Unsatisfied",
    "Neutral",
    "Satisfied",
    "Very satisfied",
];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeedbackResponse {
    pub student_id: MemberId,
    pub level: u8,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub comment: Option<String>,
    pub at: Timestamp,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeedbackSession {
    pub id: FeedbackId,
    pub channel_id: ChannelId,
    pub label: String,
    pub state: SessionState,
    pub opened_at: Timestamp,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub closed_at: Option<Timestamp>,
    #[serde(default)]
    pub responses: Vec<FeedbackResponse>,
}

impl FeedbackSession {
    pub fn open(id: FeedbackId, channel_id: ChannelId, label: String, at: Timestamp) -> Self {
        Self {
            id,
            channel_id,
            label,
            state: SessionState::Open,
            opened_at: at,
            closed_at: None,
            responses: Vec::new(),
        }
    }

    pub fn is_open(&self) -> bool {
        self.state == SessionState::Open
    }

    /// Stores a rating; a later rating from the same student replaces the
    /// earlier one, which is returned.
    pub fn record(
        &mut self,
        response: FeedbackResponse,
    ) -> Result<Option<FeedbackResponse>, DomainError> {
        if !self.is_open() {
            return Err(DomainError::SessionClosed(self.id.to_string()));
        }
        if !(1..=5).contains(&response.level) {
            return Err(DomainError::InvalidInput(format!(
                "feedback level {} outside 1..=5",
                response.level
            )));
        }
        match self
            .responses
            .iter_mut()
            .find(|r| r.student_id == response.student_id)
        {
            Some(slot) => Ok(Some(std::mem::replace(slot, response))),
            None => {
                self.responses.push(response);
                Ok(None)
            }
        }
    }

    pub fn close(&mut self, at: Timestamp) -> Result<(), DomainError> {
        if !self.is_open() {
            return Err(DomainError::SessionClosed(self.id.to_string()));
        }
        self.state = SessionState::Closed;
        self.closed_at = Some(at);
        Ok(())
    }

    pub fn histogram(&self) -> Histogram {
        let mut h = Histogram::with_labels(SATISFACTION_LABELS);
        for r in &self.responses {
            h.increment(usize::from(r.level) - 1);
        }
        h
    }
}
