use std::sync::Arc;
use std::time::Duration as StdDuration;

use chrono::Duration;
use serde_json::{json, Value};

use super::state::{Dialog, DialogStatus, EngineState, FeedbackRecord, MessageOwner, SurveyRecord};
use super::{AuditSink, Command, CommandKind, CommandResult, EngineContext, EngineError, ExportSink, QuestionSpec};
use crate::clock::Timestamp;
use crate::domain::{
    validate_attendance_code, AttendanceCode, AttendanceSession, AuditEvent, BotId, ChannelId,
    CheckIn, CheckInOutcome, FeedbackId, FeedbackResponse, FeedbackSession, Group, GroupId,
    MemberId, MessageRef, ResponseType, ResponseValue, RoleId, SessionId, SurveyDefinition,
    SurveyId, SurveyResponse, SurveyState, SATISFACTION_LABELS,
};
use crate::gateway::{ActionAck, Button, ChatAction, ChatEvent, ChatGateway, GatewayError};

/// A complex-survey dialog with no answer for this long is suspended.
pub const DIALOG_IDLE_TIMEOUT: StdDuration = StdDuration::from_secs(15 * 60);

/// Minimum spacing between live-tally edits of one survey message.
pub const TALLY_EDIT_INTERVAL: StdDuration = StdDuration::from_secs(1);

const LEVEL_PREFIX: &str = "level-";
const RATE_PREFIX: &str = "rate-";
const ANSWER_PREFIX: &str = "answer-";
const PARTICIPATE: &str = "participate";

fn chrono(d: StdDuration) -> Duration {
    Duration::from_std(d).expect("constant fits")
}

/// Parses `prefix` + a level in 1..=5.
fn button_level(button_id: &str, prefix: &str) -> Option<u8> {
    let level: u8 = button_id.strip_prefix(prefix)?.parse().ok()?;
    (1..=5).contains(&level).then_some(level)
}

fn level_buttons<S: AsRef<str>>(prefix: &str, labels: &[S]) -> Vec<Button> {
    labels
        .iter()
        .enumerate()
        .map(|(i, l)| Button::new(format!("{prefix}{}", i + 1), l.as_ref()))
        .collect()
}

enum Answer<'a> {
    Text(&'a str),
    Level(u8),
}

/// The interaction engine of one bot instance.
///
/// All state changes go through [`Engine::execute`], [`Engine::on_event`]
/// and [`Engine::survey_timeout_sweep`]; given the same inputs in the same
/// order (and a deterministic gateway) it produces the same state and the
/// same chat actions.
pub struct Engine {
    bot_id: BotId,
    ctx: EngineContext,
    gateway: Arc<dyn ChatGateway>,
    audit: Arc<dyn AuditSink>,
    exports: Arc<dyn ExportSink>,
    state: EngineState,
}

impl Engine {
    pub fn new(
        bot_id: BotId,
        ctx: EngineContext,
        groups: Vec<Group>,
        gateway: Arc<dyn ChatGateway>,
        audit: Arc<dyn AuditSink>,
        exports: Arc<dyn ExportSink>,
    ) -> Result<Self, EngineError> {
        let mut state = EngineState::default();
        for g in groups {
            g.validate()?;
            if state.groups.insert(g.id.clone(), g).is_some() {
                return Err(EngineError::InvalidInput("duplicate group id".into()));
            }
        }
        Self::restore(bot_id, ctx, state, gateway, audit, exports)
    }

    /// Resumes from a persisted state.
    pub fn restore(
        bot_id: BotId,
        ctx: EngineContext,
        state: EngineState,
        gateway: Arc<dyn ChatGateway>,
        audit: Arc<dyn AuditSink>,
        exports: Arc<dyn ExportSink>,
    ) -> Result<Self, EngineError> {
        ctx.validate()?;
        if bot_id.is_empty() {
            return Err(EngineError::InvalidInput("bot id must not be empty".into()));
        }
        Ok(Self {
            bot_id,
            ctx,
            gateway,
            audit,
            exports,
            state,
        })
    }

    pub fn bot_id(&self) -> &BotId {
        &self.bot_id
    }

    pub fn context(&self) -> &EngineContext {
        &self.ctx
    }

    pub fn state(&self) -> &EngineState {
        &self.state
    }

    pub fn into_state(self) -> EngineState {
        self.state
    }

    pub fn session(&self, id: &SessionId) -> Option<&AttendanceSession> {
        self.state.sessions.get(id)
    }

    pub fn roster_size(&self, group: &GroupId) -> usize {
        self.state.groups.get(group).map_or(0, |g| g.roster.len())
    }

    pub fn survey(&self, id: &SurveyId) -> Option<&SurveyRecord> {
        self.state.surveys.get(id)
    }

    pub fn feedback(&self, id: &FeedbackId) -> Option<&FeedbackRecord> {
        self.state.feedback.get(id)
    }

    // ----- commands -------------------------------------------------------

    /// Runs an instructor command at `now` and appends one audit event for
    /// it, whatever the outcome.
    pub fn execute(&mut self, cmd: &Command, now: Timestamp) -> Result<CommandResult, EngineError> {
        let mut out = Vec::new();
        self.advance(now, &mut out);
        let result = self.dispatch(&cmd.kind, now, &mut out);
        let mut ev = AuditEvent::new(now, cmd.actor.clone(), cmd.kind.action())
            .param("bot_id", &self.bot_id)
            .param("as_role", &self.ctx.admin_role_id);
        for (k, v) in cmd.kind.audit_params() {
            ev = ev.param(k, v);
        }
        match &result {
            Ok(r) => {
                if let Some(Value::Object(data)) = &r.data {
                    for k in ["session_id", "survey_id", "feedback_id"] {
                        if let Some(Value::String(v)) = data.get(k) {
                            ev = ev.param(k, v);
                        }
                    }
                }
                ev = ev.detail(r.message.clone());
            }
            Err(e) => ev = ev.failed(e.to_string()),
        }
        self.audit.record(ev);
        result
    }

    fn dispatch(
        &mut self,
        kind: &CommandKind,
        now: Timestamp,
        out: &mut Vec<ChatAction>,
    ) -> Result<CommandResult, EngineError> {
        match kind {
            CommandKind::StartAttendance { group_id, code } => {
                self.start_attendance(group_id, code, now, out)
            }
            CommandKind::StopAttendance { group_id } => self.stop_attendance(group_id, now, out),
            CommandKind::CreateSimpleSurvey {
                channel_id,
                question,
                duration_secs,
            } => self.create_simple_survey(channel_id, question, *duration_secs, now, out),
            CommandKind::CreateComplexSurvey {
                channel_id,
                title,
                questions,
                duration_secs,
            } => self.create_complex_survey(channel_id, title, questions, *duration_secs, now, out),
            CommandKind::CloseSurvey { survey_id } => {
                let rec = self
                    .state
                    .surveys
                    .get(survey_id)
                    .ok_or_else(|| EngineError::NotFound(format!("unknown id {survey_id}")))?;
                if !rec.definition.is_open() {
                    return Err(EngineError::Conflict(format!(
                        "survey {survey_id} is already closed"
                    )));
                }
                self.close_survey(survey_id, now, out)?;
                let results = self.state.surveys[survey_id].results();
                Ok(CommandResult::new(
                    format!("Survey {survey_id} closed with {} respondents", results.respondents),
                    to_value(&results),
                ))
            }
            CommandKind::StartFeedback { channel_id, label } => {
                self.start_feedback(channel_id, label, now, out)
            }
            CommandKind::CloseFeedback { feedback_id } => {
                self.close_feedback(feedback_id, now, out)
            }
            CommandKind::Ping => {
                let ack = self.submit(ChatAction::QueryPresence {}, out)?;
                Ok(CommandResult::new(
                    format!("Pong: {:.1} ms", ack.latency_ms),
                    json!({ "latency_ms": ack.latency_ms, "presence": ack.presence }),
                ))
            }
            CommandKind::SendGreeting { member_id, text } => {
                if text.trim().is_empty() {
                    return Err(EngineError::InvalidInput("message text must not be empty".into()));
                }
                if self.gateway.member(member_id).is_none() {
                    return Err(EngineError::NotFound(format!("unknown member {member_id}")));
                }
                let ack = self.submit(
                    ChatAction::SendDm {
                        member_id: member_id.clone(),
                        text: text.clone(),
                        buttons: vec![],
                    },
                    out,
                )?;
                Ok(CommandResult::new(
                    format!("Message sent to {member_id}"),
                    json!({ "member_id": member_id, "message_ref": ack.message_ref, "latency_ms": ack.latency_ms }),
                ))
            }
            CommandKind::GiveRole { member_id, role_id } => {
                self.give_role(member_id, role_id, out)
            }
            CommandKind::ClearMessages { channel_id, count } => {
                if *count == 0 {
                    return Err(EngineError::InvalidInput("count must be at least 1".into()));
                }
                let ack = self.submit(
                    ChatAction::DeleteMessages {
                        channel_id: channel_id.clone(),
                        count: *count,
                    },
                    out,
                )?;
                let deleted = ack.deleted.unwrap_or(0);
                Ok(CommandResult::new(
                    format!("Deleted {deleted} messages from {channel_id}"),
                    json!({ "channel_id": channel_id, "requested": count, "deleted": deleted }),
                ))
            }
        }
    }

    fn start_attendance(
        &mut self,
        group_id: &GroupId,
        code: &str,
        now: Timestamp,
        out: &mut Vec<ChatAction>,
    ) -> Result<CommandResult, EngineError> {
        let code = AttendanceCode::parse(code)?;
        let group = self
            .state
            .groups
            .get(group_id)
            .ok_or_else(|| EngineError::NotFound(format!("unknown group {group_id}")))?
            .clone();
        if let Some(open) = self.state.open_session_for(group_id) {
            return Err(EngineError::Conflict(format!(
                "attendance session {} is already open for group {group_id}",
                open.id
            )));
        }
        let n = self.state.counters.attendance + 1;
        let id = SessionId::new(format!("{}-a{n:04}", self.bot_id));
        let ack = self.submit(
            ChatAction::PostMessage {
                channel_id: group.channel_id.clone(),
                text: format!(
                    "Attendance check for group {group_id} is open. \
                     Send the attendance code to me in a direct message."
                ),
                buttons: vec![],
            },
            out,
        )?;
        self.state.counters.attendance = n;
        self.index(ack.message_ref, MessageOwner::AttendancePrompt { session_id: id.clone() });
        self.state.sessions.insert(
            id.clone(),
            AttendanceSession::open(id.clone(), group_id.clone(), code.clone(), now),
        );
        Ok(CommandResult::new(
            format!("Attendance command executed: session {id} started for group {group_id}"),
            json!({
                "session_id": id,
                "group_id": group_id,
                "code": code,
                "state": "open",
                "roster_size": group.roster.len(),
            }),
        ))
    }

    fn stop_attendance(
        &mut self,
        group_id: &GroupId,
        now: Timestamp,
        out: &mut Vec<ChatAction>,
    ) -> Result<CommandResult, EngineError> {
        let group = self
            .state
            .groups
            .get(group_id)
            .ok_or_else(|| EngineError::NotFound(format!("unknown group {group_id}")))?
            .clone();
        let mut session = self
            .state
            .open_session_for(group_id)
            .ok_or_else(|| {
                EngineError::NotFound(format!("no open attendance session for group {group_id}"))
            })?
            .clone();
        session.close(now)?;
        // The export lands before the session is marked closed, so a failed
        // write leaves a retryable open session.
        let path = self
            .exports
            .export_attendance(&session)
            .map_err(|e| EngineError::Internal(format!("attendance export failed: {e}")))?;
        let summary = session.summary(group.roster.len());
        let tally = if summary.roster_size > 0 {
            format!("{} of {} present", summary.present_count, summary.roster_size)
        } else {
            format!("{} present", summary.present_count)
        };
        self.submit(
            ChatAction::PostMessage {
                channel_id: group.channel_id.clone(),
                text: format!("Attendance check for group {group_id} is closed: {tally}."),
                buttons: vec![],
            },
            out,
        )?;
        let id = session.id.clone();
        self.state.sessions.insert(id.clone(), session);
        let mut data = to_value(&summary);
        data["export"] = json!(path.to_string_lossy());
        Ok(CommandResult::new(
            format!("Attendance command executed: session {id} closed for group {group_id}, {tally}"),
            data,
        ))
    }

    fn next_survey_id(&self) -> (u32, SurveyId) {
        let n = self.state.counters.survey + 1;
        (n, SurveyId::new(format!("{}-s{n:04}", self.bot_id)))
    }

    fn create_simple_survey(
        &mut self,
        channel_id: &ChannelId,
        question: &str,
        duration_secs: Option<u64>,
        now: Timestamp,
        out: &mut Vec<ChatAction>,
    ) -> Result<CommandResult, EngineError> {
        if question.trim().is_empty() {
            return Err(EngineError::InvalidInput("question must not be empty".into()));
        }
        let (n, id) = self.next_survey_id();
        let mut def = SurveyDefinition::simple(id.clone(), channel_id.clone(), question.trim(), duration_secs);
        def.validate()?;
        def.state = SurveyState::Open;
        def.opened_at = Some(now);
        let mut rec = SurveyRecord {
            definition: def,
            responses: Vec::new(),
            message_ref: None,
            tally: Default::default(),
        };
        let ack = self.submit(
            ChatAction::PostMessage {
                channel_id: channel_id.clone(),
                text: tally_text(&rec),
                buttons: level_buttons(LEVEL_PREFIX, &rec.definition.questions[0].options),
            },
            out,
        )?;
        rec.message_ref = ack.message_ref;
        self.commit_survey(n, rec, ack.message_ref, |survey_id| MessageOwner::SimpleSurvey { survey_id });
        Ok(survey_created(&self.state.surveys[&id]))
    }

    fn create_complex_survey(
        &mut self,
        channel_id: &ChannelId,
        title: &str,
        questions: &[QuestionSpec],
        duration_secs: Option<u64>,
        now: Timestamp,
        out: &mut Vec<ChatAction>,
    ) -> Result<CommandResult, EngineError> {
        let (n, id) = self.next_survey_id();
        let mut def = SurveyDefinition::complex(
            id.clone(),
            channel_id.clone(),
            title.trim(),
            questions.iter().map(|q| (q.prompt.trim().to_owned(), q.response_type)),
            duration_secs,
        );
        def.validate()?;
        def.state = SurveyState::Open;
        def.opened_at = Some(now);
        let count = def.questions.len();
        let ack = self.submit(
            ChatAction::PostMessage {
                channel_id: channel_id.clone(),
                text: format!(
                    "{}\n{count} question{}. Click Participate to answer in a direct message.",
                    def.title,
                    if count == 1 { "" } else { "s" }
                ),
                buttons: vec![Button::new(PARTICIPATE, "Participate")],
            },
            out,
        )?;
        let rec = SurveyRecord {
            definition: def,
            responses: Vec::new(),
            message_ref: ack.message_ref,
            tally: Default::default(),
        };
        self.commit_survey(n, rec, ack.message_ref, |survey_id| MessageOwner::Participate { survey_id });
        Ok(survey_created(&self.state.surveys[&id]))
    }

    fn commit_survey(
        &mut self,
        n: u32,
        rec: SurveyRecord,
        message_ref: Option<MessageRef>,
        owner: impl FnOnce(SurveyId) -> MessageOwner,
    ) {
        let id = rec.definition.id.clone();
        self.state.counters.survey = n;
        self.index(message_ref, owner(id.clone()));
        self.state.surveys.insert(id, rec);
    }

    /// Closes an open survey: export, final message edit, then state.
    fn close_survey(
        &mut self,
        id: &SurveyId,
        now: Timestamp,
        out: &mut Vec<ChatAction>,
    ) -> Result<(), EngineError> {
        let mut rec = self.state.surveys[id].clone();
        let opened = rec.definition.opened_at.unwrap_or(now);
        rec.definition.state = SurveyState::Closed;
        rec.definition.closed_at = Some(now.max(opened));
        rec.tally.pending = false;
        self.exports
            .export_survey(&rec.definition, &rec.responses)
            .map_err(|e| EngineError::Internal(format!("survey export failed: {e}")))?;
        if let Some(r) = rec.message_ref {
            let text = match rec.definition.kind {
                crate::domain::SurveyKind::Simple => tally_text(&rec),
                crate::domain::SurveyKind::Complex => format!(
                    "{}\nThis survey is closed. {} students took part.",
                    rec.definition.title,
                    rec.results().respondents
                ),
            };
            self.edit_tolerating_deleted(r, text, vec![], out)?;
            rec.tally.last_edit_at = Some(now);
        }
        for d in self.state.dialogs.iter_mut() {
            if &d.survey_id == id && d.status == DialogStatus::Active {
                d.status = DialogStatus::Expired;
            }
        }
        self.state.surveys.insert(id.clone(), rec);
        Ok(())
    }

    fn start_feedback(
        &mut self,
        channel_id: &ChannelId,
        label: &str,
        now: Timestamp,
        out: &mut Vec<ChatAction>,
    ) -> Result<CommandResult, EngineError> {
        let label = label.trim();
        if label.is_empty() {
            return Err(EngineError::InvalidInput("feedback label must not be empty".into()));
        }
        if channel_id.is_empty() {
            return Err(EngineError::InvalidInput("feedback needs a channel".into()));
        }
        let n = self.state.counters.feedback + 1;
        let id = FeedbackId::new(format!("{}-f{n:04}", self.bot_id));
        let ack = self.submit(
            ChatAction::PostMessage {
                channel_id: channel_id.clone(),
                text: format!("{label}\nHow satisfied are you with this session?"),
                buttons: level_buttons(RATE_PREFIX, &SATISFACTION_LABELS),
            },
            out,
        )?;
        self.state.counters.feedback = n;
        self.index(ack.message_ref, MessageOwner::Feedback { feedback_id: id.clone() });
        self.state.feedback.insert(
            id.clone(),
            FeedbackRecord {
                session: FeedbackSession::open(id.clone(), channel_id.clone(), label.to_owned(), now),
                message_ref: ack.message_ref,
            },
        );
        Ok(CommandResult::new(
            format!("Feedback {id} opened in channel {channel_id}"),
            json!({ "feedback_id": id, "channel_id": channel_id, "state": "open" }),
        ))
    }

    fn close_feedback(
        &mut self,
        id: &FeedbackId,
        now: Timestamp,
        out: &mut Vec<ChatAction>,
    ) -> Result<CommandResult, EngineError> {
        let mut rec = self
            .state
            .feedback
            .get(id)
            .ok_or_else(|| EngineError::NotFound(format!("unknown id {id}")))?
            .clone();
        rec.session.close(now)?;
        if let Some(r) = rec.message_ref {
            let text = format!(
                "{}\nFeedback is closed. Results:\n{}",
                rec.session.label,
                rec.session.histogram().render_text()
            );
            self.edit_tolerating_deleted(r, text, vec![], out)?;
        }
        let results = rec.results();
        self.state.feedback.insert(id.clone(), rec);
        Ok(CommandResult::new(
            format!("Feedback {id} closed with {} responses", results.histogram.total()),
            to_value(&results),
        ))
    }

    fn give_role(
        &mut self,
        member_id: &MemberId,
        role_id: &RoleId,
        out: &mut Vec<ChatAction>,
    ) -> Result<CommandResult, EngineError> {
        if self.gateway.member(member_id).is_none() {
            return Err(EngineError::NotFound(format!("unknown member {member_id}")));
        }
        self.submit(
            ChatAction::AssignRole {
                member_id: member_id.clone(),
                role_id: role_id.clone(),
            },
            out,
        )?;
        Ok(CommandResult::new(
            format!("Role {role_id} assigned to {member_id}"),
            json!({ "member_id": member_id, "role_id": role_id }),
        ))
    }

    // ----- time -----------------------------------------------------------

    /// Closes every open survey whose time limit has passed (in id order),
    /// suspends idle survey dialogs and flushes throttled tally edits.
    /// Returns the ids of the surveys it closed.
    pub fn survey_timeout_sweep(&mut self, now: Timestamp) -> Vec<SurveyId> {
        let mut out = Vec::new();
        self.advance(now, &mut out)
    }

    fn advance(&mut self, now: Timestamp, out: &mut Vec<ChatAction>) -> Vec<SurveyId> {
        let due: Vec<SurveyId> = self
            .state
            .surveys
            .values()
            .filter(|s| s.definition.is_open() && s.definition.deadline().is_some_and(|d| d <= now))
            .map(|s| s.definition.id.clone())
            .collect();
        let mut closed = Vec::new();
        for id in due {
            let deadline = self.state.surveys[&id].definition.deadline().unwrap_or(now);
            let ev = AuditEvent::new(now, AuditEvent::SYSTEM, "survey.close")
                .param("bot_id", &self.bot_id)
                .param("survey_id", &id)
                .param("reason", "time_limit");
            // Close at the deadline itself, not whenever the sweep ran.
            match self.close_survey(&id, deadline, out) {
                Ok(()) => {
                    self.audit.record(ev);
                    closed.push(id);
                }
                Err(e) => {
                    tracing::warn!(survey = %id, error = %e, "timed survey close failed; will retry");
                    self.audit.record(ev.failed(e.to_string()));
                }
            }
        }
        self.expire_dialogs(now, out);
        self.flush_tallies(now, out);
        closed
    }

    fn expire_dialogs(&mut self, now: Timestamp, out: &mut Vec<ChatAction>) {
        let idle = chrono(DIALOG_IDLE_TIMEOUT);
        let expiring: Vec<(SurveyId, MemberId)> = self
            .state
            .dialogs
            .iter()
            .filter(|d| d.status == DialogStatus::Active && d.last_activity + idle <= now)
            .map(|d| (d.survey_id.clone(), d.member_id.clone()))
            .collect();
        for (survey, member) in expiring {
            if let Some(d) = self.state.dialog_mut(&survey, &member) {
                d.status = DialogStatus::Expired;
            }
            let title = self.state.surveys[&survey].definition.title.clone();
            self.audit.record(
                AuditEvent::new(now, AuditEvent::SYSTEM, "survey.dialog_expired")
                    .param("bot_id", &self.bot_id)
                    .param("survey_id", &survey)
                    .param("member_id", &member),
            );
            self.dm(
                &member,
                format!(
                    "Your answers to {title} so far are saved, but the survey timed out. \
                     Click Participate again to continue."
                ),
                vec![],
                now,
                out,
            );
        }
    }

    fn flush_tallies(&mut self, now: Timestamp, out: &mut Vec<ChatAction>) {
        let interval = chrono(TALLY_EDIT_INTERVAL);
        let due: Vec<SurveyId> = self
            .state
            .surveys
            .values()
            .filter(|s| {
                s.definition.is_open()
                    && s.tally.pending
                    && s.tally.last_edit_at.is_none_or(|t| t + interval <= now)
            })
            .map(|s| s.definition.id.clone())
            .collect();
        for id in due {
            self.edit_tally(&id, now, out);
        }
    }

    fn edit_tally(&mut self, id: &SurveyId, now: Timestamp, out: &mut Vec<ChatAction>) {
        let rec = &self.state.surveys[id];
        let Some(r) = rec.message_ref else { return };
        let action = ChatAction::EditMessage {
            message_ref: r,
            text: tally_text(rec),
            buttons: level_buttons(LEVEL_PREFIX, &rec.definition.questions[0].options),
        };
        let result = self.submit(action, out);
        let rec = self.state.surveys.get_mut(id).expect("survey exists");
        match result {
            Ok(_) | Err(GatewayError::NotFound(_)) => {
                rec.tally.last_edit_at = Some(now);
                rec.tally.pending = false;
            }
            Err(e) => {
                rec.tally.pending = true;
                tracing::warn!(survey = %id, error = %e, "tally edit failed");
            }
        }
    }

    // ----- events ---------------------------------------------------------

    /// Handles one platform event and returns the chat actions it caused
    /// (already submitted to the gateway).
    pub fn on_event(&mut self, event: &ChatEvent) -> Vec<ChatAction> {
        let now = event.at();
        let mut out = Vec::new();
        self.advance(now, &mut out);
        match event {
            ChatEvent::DirectMessage { member_id, text, .. } => {
                self.on_dm(member_id, text, now, &mut out)
            }
            ChatEvent::ButtonClick {
                message_ref,
                member_id,
                button_id,
                ..
            } => self.on_click(*message_ref, member_id, button_id, now, &mut out),
            ChatEvent::ChannelMessage { .. }
            | ChatEvent::PresenceReport { .. }
            | ChatEvent::MemberStateChange { .. } => {}
        }
        out
    }

    fn on_dm(&mut self, member: &MemberId, text: &str, now: Timestamp, out: &mut Vec<ChatAction>) {
        let t = text.trim();
        let code_like = validate_attendance_code(t);
        if code_like {
            let matching: Vec<(SessionId, GroupId)> = self
                .state
                .sessions
                .values()
                .filter(|s| s.is_open() && s.code.as_str() == t)
                .map(|s| (s.id.clone(), s.group_id.clone()))
                .collect();
            if let Some((sid, _)) = matching.iter().find(|(_, g)| self.admits(g, member)) {
                self.check_in(sid, member, now, out);
                return;
            }
            if let Some((sid, _)) = matching.first() {
                let sid = sid.clone();
                self.reject(member, &sid, "not_on_roster", "You are not on the roster for this attendance check, so the code was not recorded.", now, out);
                return;
            }
        }
        if let Some(d) = self.state.active_dialog_of(member).cloned() {
            self.answer_dialog(&d, Answer::Text(text), now, out);
            return;
        }
        let admitting = self
            .state
            .sessions
            .values()
            .find(|s| s.is_open() && self.admits(&s.group_id, member))
            .map(|s| s.id.clone());
        match (code_like, admitting) {
            (true, Some(sid)) => self.reject(
                member,
                &sid,
                "wrong_code",
                "That attendance code is not correct. Please check it and try again.",
                now,
                out,
            ),
            (true, None) => self.reject(
                member,
                &SessionId::new(""),
                "no_open_session",
                "There is no open attendance check for you right now, so the code was not recorded.",
                now,
                out,
            ),
            (false, Some(_)) => {
                self.dm(
                    member,
                    "To check in, reply with the 4-digit attendance code.".into(),
                    vec![],
                    now,
                    out,
                );
            }
            (false, None) => self.ignored(now, member, "direct_message", "no_matching_session"),
        }
    }

    fn admits(&self, group: &GroupId, member: &MemberId) -> bool {
        self.state.groups.get(group).is_some_and(|g| g.admits(member))
    }

    fn check_in(&mut self, sid: &SessionId, member: &MemberId, now: Timestamp, out: &mut Vec<ChatAction>) {
        let display_name = self
            .gateway
            .member(member)
            .map(|m| m.display_name)
            .unwrap_or_else(|| member.to_string());
        let session = self.state.sessions.get_mut(sid).expect("open session exists");
        let group = session.group_id.clone();
        let at = now.max(session.opened_at);
        let outcome = session.check_in(CheckIn {
            student_id: member.clone(),
            display_name: display_name.clone(),
            at,
        });
        let ev = AuditEvent::new(now, AuditEvent::SYSTEM, "attendance.checkin")
            .param("bot_id", &self.bot_id)
            .param("session_id", sid)
            .param("member_id", member);
        let text = match outcome {
            Ok(CheckInOutcome::Recorded) => {
                self.audit.record(ev.param("result", "recorded"));
                format!("You are checked in for group {group}. Thank you, {display_name}!")
            }
            Ok(CheckInOutcome::AlreadyCheckedIn) => {
                self.audit.record(ev.param("result", "duplicate"));
                format!("You are already checked in for group {group}.")
            }
            Err(e) => {
                self.audit.record(ev.failed(e.to_string()));
                return;
            }
        };
        self.dm(member, text, vec![], now, out);
    }

    fn reject(
        &mut self,
        member: &MemberId,
        session: &SessionId,
        reason: &str,
        text: &str,
        now: Timestamp,
        out: &mut Vec<ChatAction>,
    ) {
        let mut ev = AuditEvent::new(now, AuditEvent::SYSTEM, "attendance.rejected")
            .param("bot_id", &self.bot_id)
            .param("member_id", member)
            .param("reason", reason);
        if !session.is_empty() {
            ev = ev.param("session_id", session);
        }
        self.audit.record(ev);
        self.dm(member, text.to_owned(), vec![], now, out);
    }

    fn on_click(
        &mut self,
        message_ref: MessageRef,
        member: &MemberId,
        button_id: &str,
        now: Timestamp,
        out: &mut Vec<ChatAction>,
    ) {
        let Some(owner) = self.state.messages.get(&message_ref.0).cloned() else {
            return self.ignored(now, member, "button_click", "unknown_message");
        };
        match owner {
            MessageOwner::SimpleSurvey { survey_id } => {
                let Some(level) = button_level(button_id, LEVEL_PREFIX) else {
                    return self.ignored(now, member, "button_click", "unknown_button");
                };
                if !self.survey_open(&survey_id) {
                    return self.ignored(now, member, "button_click", "survey_closed");
                }
                self.record_response(&survey_id, member, 0, ResponseValue::Level(level), now);
                let interval = chrono(TALLY_EDIT_INTERVAL);
                let rec = self.state.surveys.get_mut(&survey_id).expect("survey exists");
                if rec.tally.last_edit_at.is_none_or(|t| t + interval <= now) {
                    self.edit_tally(&survey_id, now, out);
                } else {
                    // Picked up by the next event or sweep once the interval has passed.
                    rec.tally.pending = true;
                }
            }
            MessageOwner::Participate { survey_id } => {
                if button_id != PARTICIPATE {
                    return self.ignored(now, member, "button_click", "unknown_button");
                }
                if !self.survey_open(&survey_id) {
                    return self.ignored(now, member, "button_click", "survey_closed");
                }
                self.participate(&survey_id, member, now, out);
            }
            MessageOwner::Feedback { feedback_id } => {
                let Some(level) = button_level(button_id, RATE_PREFIX) else {
                    return self.ignored(now, member, "button_click", "unknown_button");
                };
                self.rate(&feedback_id, member, level, now, out);
            }
            MessageOwner::DialogQuestion {
                survey_id,
                member_id,
                index,
            } => {
                let Some(level) = button_level(button_id, ANSWER_PREFIX) else {
                    return self.ignored(now, member, "button_click", "unknown_button");
                };
                let current = self.state.dialog(&survey_id, &member_id).cloned().filter(|d| {
                    &member_id == member && d.status == DialogStatus::Active && d.next_question == index
                });
                match current {
                    Some(d) if self.survey_open(&survey_id) => {
                        self.answer_dialog(&d, Answer::Level(level), now, out)
                    }
                    _ => self.ignored(now, member, "button_click", "stale_question"),
                }
            }
            MessageOwner::AttendancePrompt { .. } => {
                self.ignored(now, member, "button_click", "unknown_button")
            }
        }
    }

    fn survey_open(&self, id: &SurveyId) -> bool {
        self.state.surveys.get(id).is_some_and(|s| s.definition.is_open())
    }

    fn record_response(
        &mut self,
        survey_id: &SurveyId,
        member: &MemberId,
        question_index: usize,
        value: ResponseValue,
        now: Timestamp,
    ) {
        let rec = self.state.surveys.get_mut(survey_id).expect("survey exists");
        let replaced = rec.upsert(SurveyResponse {
            survey_id: survey_id.clone(),
            question_index,
            student_id: member.clone(),
            value: value.clone(),
            at: now,
        });
        self.audit.record(
            AuditEvent::new(now, AuditEvent::SYSTEM, "survey.response")
                .param("bot_id", &self.bot_id)
                .param("survey_id", survey_id)
                .param("member_id", member)
                .param("question_index", question_index)
                .param("value", value.to_plain())
                .param("replaced", replaced),
        );
    }

    fn participate(&mut self, survey_id: &SurveyId, member: &MemberId, now: Timestamp, out: &mut Vec<ChatAction>) {
        let title = self.state.surveys[survey_id].definition.title.clone();
        match self.state.dialog(survey_id, member).map(|d| d.status) {
            None => {
                self.state.dialogs.push(Dialog {
                    survey_id: survey_id.clone(),
                    member_id: member.clone(),
                    next_question: 0,
                    last_activity: now,
                    status: DialogStatus::Active,
                });
                self.audit.record(
                    AuditEvent::new(now, AuditEvent::SYSTEM, "survey.participate")
                        .param("bot_id", &self.bot_id)
                        .param("survey_id", survey_id)
                        .param("member_id", member),
                );
                self.send_question(survey_id, member, 0, "", now, out);
            }
            Some(DialogStatus::Active) => {
                self.dm(
                    member,
                    format!("You are already taking part in {title}. Please answer the last question I sent you."),
                    vec![],
                    now,
                    out,
                );
            }
            Some(DialogStatus::Completed) => {
                self.dm(
                    member,
                    format!("You have already completed {title}. Thank you!"),
                    vec![],
                    now,
                    out,
                );
            }
            Some(DialogStatus::Expired) => {
                let d = self.state.dialog_mut(survey_id, member).expect("dialog exists");
                d.status = DialogStatus::Active;
                d.last_activity = now;
                let index = d.next_question;
                self.send_question(survey_id, member, index, "Welcome back. ", now, out);
            }
        }
    }

    fn send_question(
        &mut self,
        survey_id: &SurveyId,
        member: &MemberId,
        index: usize,
        prefix: &str,
        now: Timestamp,
        out: &mut Vec<ChatAction>,
    ) {
        let def = &self.state.surveys[survey_id].definition;
        let q = &def.questions[index];
        let text = format!(
            "{prefix}{}: question {} of {}\n{}\n{}",
            def.title,
            index + 1,
            def.questions.len(),
            q.prompt,
            q.answer_hint()
        );
        let buttons = match q.response_type {
            ResponseType::FiveLevel => level_buttons(ANSWER_PREFIX, &q.options),
            _ => vec![],
        };
        if let Some(r) = self.dm(member, text, buttons, now, out) {
            self.index(
                Some(r),
                MessageOwner::DialogQuestion {
                    survey_id: survey_id.clone(),
                    member_id: member.clone(),
                    index,
                },
            );
        }
    }

    fn answer_dialog(&mut self, dialog: &Dialog, answer: Answer<'_>, now: Timestamp, out: &mut Vec<ChatAction>) {
        let def = &self.state.surveys[&dialog.survey_id].definition;
        let q = def.questions[dialog.next_question].clone();
        let total = def.questions.len();
        let title = def.title.clone();
        let value = match answer {
            Answer::Text(t) => q.parse_answer(t),
            Answer::Level(l) => (q.response_type == ResponseType::FiveLevel).then_some(ResponseValue::Level(l)),
        };
        let (survey, member) = (dialog.survey_id.clone(), dialog.member_id.clone());
        let d = self.state.dialog_mut(&survey, &member).expect("dialog exists");
        d.last_activity = now;
        let Some(value) = value else {
            self.dm(
                &member,
                format!("Sorry, I could not read that answer. {}", q.answer_hint()),
                vec![],
                now,
                out,
            );
            return;
        };
        d.next_question += 1;
        let next = d.next_question;
        if next >= total {
            d.status = DialogStatus::Completed;
        }
        self.record_response(&survey, &member, q.index, value, now);
        if next < total {
            self.send_question(&survey, &member, next, "", now, out);
        } else {
            self.dm(
                &member,
                format!("Thank you! Your answers to {title} have been recorded."),
                vec![],
                now,
                out,
            );
        }
    }

    fn rate(&mut self, id: &FeedbackId, member: &MemberId, level: u8, now: Timestamp, out: &mut Vec<ChatAction>) {
        let Some(rec) = self.state.feedback.get_mut(id).filter(|r| r.session.is_open()) else {
            return self.ignored(now, member, "button_click", "feedback_closed");
        };
        let replaced = match rec.session.record(FeedbackResponse {
            student_id: member.clone(),
            level,
            comment: None,
            at: now,
        }) {
            Ok(prev) => prev.is_some(),
            Err(e) => {
                tracing::warn!(feedback = %id, error = %e, "feedback rejected");
                return;
            }
        };
        let text = format!(
            "Thanks for your rating. Current results for {}:\n{}",
            rec.session.label,
            rec.session.histogram().render_text()
        );
        self.audit.record(
            AuditEvent::new(now, AuditEvent::SYSTEM, "feedback.response")
                .param("bot_id", &self.bot_id)
                .param("feedback_id", id)
                .param("member_id", member)
                .param("level", level)
                .param("replaced", replaced),
        );
        self.dm(member, text, vec![], now, out);
    }

    fn ignored(&self, now: Timestamp, member: &MemberId, event: &str, reason: &str) {
        self.audit.record(
            AuditEvent::new(now, AuditEvent::SYSTEM, "event.ignored")
                .param("bot_id", &self.bot_id)
                .param("member_id", member)
                .param("event", event)
                .param("reason", reason),
        );
    }

    // ----- platform plumbing ---------------------------------------------

    fn submit(&self, action: ChatAction, out: &mut Vec<ChatAction>) -> Result<ActionAck, GatewayError> {
        let ack = self.gateway.submit(action.clone())?;
        out.push(action);
        Ok(ack)
    }

    fn edit_tolerating_deleted(
        &self,
        message_ref: MessageRef,
        text: String,
        buttons: Vec<Button>,
        out: &mut Vec<ChatAction>,
    ) -> Result<(), EngineError> {
        match self.submit(
            ChatAction::EditMessage {
                message_ref,
                text,
                buttons,
            },
            out,
        ) {
            Ok(_) | Err(GatewayError::NotFound(_)) => Ok(()),
            Err(e) => Err(e.into()),
        }
    }

    /// Best-effort DM from event handling; failures end up in the audit log.
    fn dm(
        &self,
        member: &MemberId,
        text: String,
        buttons: Vec<Button>,
        now: Timestamp,
        out: &mut Vec<ChatAction>,
    ) -> Option<MessageRef> {
        let action = ChatAction::SendDm {
            member_id: member.clone(),
            text,
            buttons,
        };
        match self.submit(action, out) {
            Ok(ack) => ack.message_ref,
            Err(e) => {
                tracing::warn!(member = %member, error = %e, "direct message failed");
                self.audit.record(
                    AuditEvent::new(now, AuditEvent::SYSTEM, "chat.send_dm")
                        .param("bot_id", &self.bot_id)
                        .param("member_id", member)
                        .failed(e.to_string()),
                );
                None
            }
        }
    }

    fn index(&mut self, message_ref: Option<MessageRef>, owner: MessageOwner) {
        if let Some(r) = message_ref {
            self.state.messages.insert(r.0, owner);
        }
    }
}

fn to_value<T: serde::Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("read models serialize")
}

fn survey_created(rec: &SurveyRecord) -> CommandResult {
    let def = &rec.definition;
    CommandResult::new(
        format!("Survey {} opened in channel {}", def.id, def.channel_id),
        json!({
            "survey_id": def.id,
            "kind": def.kind,
            "channel_id": def.channel_id,
            "questions": def.questions.len(),
            "closes_at": def.deadline(),
            "state": "open",
        }),
    )
}

/// Channel text of a simple survey: the question and its live tally.
fn tally_text(rec: &SurveyRecord) -> String {
    let results = rec.results();
    let q = &results.questions[0];
    let status = if rec.definition.is_open() {
        "Click a button to answer."
    } else {
        "This survey is closed."
    };
    format!("{}\n{}\n{status}", q.prompt, q.histogram.render_text())
}
