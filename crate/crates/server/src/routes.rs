//! Request handlers. Commands go through the owning bot's engine queue;
//! reads run on the engine thread of a running bot, or against the stored
//! snapshot of a stopped one.

use axum::extract::{Path, State};
use axum::http::HeaderMap;
use axum::Extension;
use edubot_core::domain::{
    AttendanceCode, AuditEvent, BotId, ChannelId, FeedbackId, GroupId, MemberId, PresenceSnapshot,
    RoleId, SurveyId,
};
use edubot_core::engine::{CommandKind, EngineState, QuestionSpec};
use serde::Deserialize;
use serde_json::{json, Value};

use crate::app::{AppState, AuditTicket};
use crate::auth::Principal;
use crate::bots::CreateBot;
use crate::response::{ApiError, ApiJson, ApiQuery, ApiResponse, ApiResult};

// ----- reads ---------------------------------------------------------------

/// Runs `f` against a bot's state: on its engine thread when running, so the
/// result is consistent with every input accepted so far, or against the
/// stored snapshot when stopped.
async fn read_bot<T, F>(state: &AppState, bot: &BotId, f: F) -> Result<T, ApiError>
where
    T: Send + 'static,
    F: FnOnce(&EngineState) -> T + Send + 'static,
{
    if let Some(rt) = state.bots.runtime(bot) {
        return Ok(rt.handle.read(move |e| f(e.state())).await?);
    }
    match state.bots.stored_state(bot) {
        Some(s) => Ok(f(&s)),
        None => Err(ApiError::bad_request(format!("unknown bot {bot}"))),
    }
}

/// Bot that owns an id such as `b1-s0003`.
fn owner_of(id: &str) -> Result<BotId, ApiError> {
    match id.split_once('-') {
        Some((bot, rest)) if !bot.is_empty() && !rest.is_empty() => Ok(BotId::new(bot)),
        _ => Err(ApiError::bad_request(format!("unknown id {id}"))),
    }
}

fn bots_to_scan(state: &AppState, bot: Option<&str>) -> Result<Vec<BotId>, ApiError> {
    match bot.filter(|b| !b.is_empty()) {
        Some(b) => {
            let id = BotId::new(b);
            if state.bots.get(&id).is_none() {
                return Err(ApiError::bad_request(format!("unknown bot {id}")));
            }
            Ok(vec![id])
        }
        None => Ok(state.bots.list().into_iter().map(|b| b.id).collect()),
    }
}

fn roster_size(s: &EngineState, group: &GroupId) -> usize {
    s.groups.get(group).map_or(0, |g| g.roster.len())
}

#[derive(Debug, Deserialize)]
pub struct HealthQuery {
    #[serde(default)]
    bot: Option<String>,
}

/// Server status. Presence counts are included only for a caller with a
/// valid API key: for the named bot, or summed over running bots.
pub async fn health(State(state): State<AppState>, headers: HeaderMap, ApiQuery(q): ApiQuery<HealthQuery>) -> ApiResult {
    let bots = state.bots.list();
    let running = state.bots.running();
    let mut data = json!({
        "server": "online",
        "checked_at": state.clock.now(),
        "bots": { "total": bots.len(), "running": running.len() },
    });
    if state.keys.authenticate(&headers).is_some() {
        let presence = match q.bot.filter(|b| !b.is_empty()) {
            Some(b) => state.bots.presence(&BotId::new(b)).unwrap_or_default(),
            None => running.iter().filter_map(|b| state.bots.presence(b)).fold(
                PresenceSnapshot::default(),
                |acc, p| PresenceSnapshot {
                    online: acc.online + p.online,
                    offline: acc.offline + p.offline,
                    total: acc.total + p.total,
                },
            ),
        };
        data["presence"] = json!(presence);
    }
    Ok(ApiResponse::success("Server online", Some(data)))
}

#[derive(Debug, Deserialize)]
pub struct ListQuery {
    #[serde(default)]
    bot: Option<String>,
    #[serde(default)]
    group: Option<String>,
}

pub async fn list_sessions(State(state): State<AppState>, ApiQuery(q): ApiQuery<ListQuery>) -> ApiResult {
    let mut sessions = Vec::new();
    for bot in bots_to_scan(&state, q.bot.as_deref())? {
        let group = q.group.clone().map(GroupId::new);
        let bot_id = bot.clone();
        let mut rows = read_bot(&state, &bot, move |s| {
            s.sessions
                .values()
                .filter(|x| group.as_ref().is_none_or(|g| &x.group_id == g))
                .map(|x| {
                    let mut v = json!(x.summary(roster_size(s, &x.group_id)));
                    v["bot_id"] = json!(bot_id);
                    v["code"] = json!(x.code);
                    v
                })
                .collect::<Vec<_>>()
        })
        .await?;
        sessions.append(&mut rows);
    }
    let n = sessions.len();
    Ok(ApiResponse::success(format!("{n} attendance sessions"), Some(json!({ "sessions": sessions }))))
}

pub async fn get_session(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult {
    let bot = owner_of(&id)?;
    if state.bots.get(&bot).is_none() {
        return Err(ApiError::bad_request(format!("unknown id {id}")));
    }
    let key = id.clone();
    let found = read_bot(&state, &bot, move |s| {
        s.sessions.get(key.as_str()).map(|x| {
            let mut v = json!(x.summary(roster_size(s, &x.group_id)));
            v["code"] = json!(x.code);
            v["checkins"] = json!(x.checkins);
            v
        })
    })
    .await?;
    let mut data = found.ok_or_else(|| ApiError::bad_request(format!("unknown id {id}")))?;
    data["bot_id"] = json!(bot);
    let msg = format!(
        "Session {id}: {} present",
        data["present_count"].as_u64().unwrap_or_default()
    );
    Ok(ApiResponse::success(msg, Some(data)))
}

pub async fn list_surveys(State(state): State<AppState>, ApiQuery(q): ApiQuery<ListQuery>) -> ApiResult {
    let mut surveys = Vec::new();
    for bot in bots_to_scan(&state, q.bot.as_deref())? {
        let bot_id = bot.clone();
        let mut rows = read_bot(&state, &bot, move |s| {
            s.surveys
                .values()
                .map(|r| {
                    let d = &r.definition;
                    let res = r.results();
                    json!({
                        "survey_id": d.id,
                        "bot_id": bot_id,
                        "kind": d.kind,
                        "title": d.title,
                        "channel_id": d.channel_id,
                        "state": d.state,
                        "questions": d.questions.len(),
                        "respondents": res.respondents,
                        "opened_at": d.opened_at,
                        "closed_at": d.closed_at,
                        "closes_at": d.deadline(),
                    })
                })
                .collect::<Vec<_>>()
        })
        .await?;
        surveys.append(&mut rows);
    }
    let n = surveys.len();
    Ok(ApiResponse::success(format!("{n} surveys"), Some(json!({ "surveys": surveys }))))
}

pub async fn survey_results(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult {
    let bot = owner_of(&id)?;
    if state.bots.get(&bot).is_none() {
        return Err(ApiError::bad_request(format!("unknown id {id}")));
    }
    let key = SurveyId::new(id.clone());
    let found = read_bot(&state, &bot, move |s| {
        s.surveys.get(&key).map(|r| {
            let mut v = json!(r.results());
            v["responses"] = json!(r
                .responses
                .iter()
                .map(|x| json!({
                    "question_index": x.question_index,
                    "student_id": x.student_id,
                    "value": x.value.to_plain(),
                    "ts": x.at,
                }))
                .collect::<Vec<_>>());
            v
        })
    })
    .await?;
    let data = found.ok_or_else(|| ApiError::bad_request(format!("unknown id {id}")))?;
    Ok(ApiResponse::success(format!("Results for survey {id}"), Some(data)))
}

pub async fn list_feedback(State(state): State<AppState>, ApiQuery(q): ApiQuery<ListQuery>) -> ApiResult {
    let mut sessions = Vec::new();
    for bot in bots_to_scan(&state, q.bot.as_deref())? {
        let bot_id = bot.clone();
        let mut rows = read_bot(&state, &bot, move |s| {
            s.feedback
                .values()
                .map(|r| {
                    let f = &r.session;
                    json!({
                        "feedback_id": f.id,
                        "bot_id": bot_id,
                        "label": f.label,
                        "channel_id": f.channel_id,
                        "state": f.state,
                        "total": r.results().histogram.total(),
                        "opened_at": f.opened_at,
                        "closed_at": f.closed_at,
                    })
                })
                .collect::<Vec<_>>()
        })
        .await?;
        sessions.append(&mut rows);
    }
    let n = sessions.len();
    Ok(ApiResponse::success(format!("{n} feedback sessions"), Some(json!({ "feedback": sessions }))))
}

pub async fn feedback_results(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult {
    let bot = owner_of(&id)?;
    if state.bots.get(&bot).is_none() {
        return Err(ApiError::bad_request(format!("unknown id {id}")));
    }
    let key = FeedbackId::new(id.clone());
    let found = read_bot(&state, &bot, move |s| s.feedback.get(&key).map(|r| json!(r.results()))).await?;
    let data = found.ok_or_else(|| ApiError::bad_request(format!("unknown id {id}")))?;
    Ok(ApiResponse::success(format!("Results for feedback session {id}"), Some(data)))
}

// ----- commands ------------------------------------------------------------

#[derive(Debug, Deserialize)]
pub struct AttendanceQuery {
    #[serde(default)]
    code: Option<String>,
    #[serde(default)]
    group: Option<String>,
    #[serde(default)]
    status: Option<String>,
    #[serde(default)]
    bot: Option<String>,
}

/// `POST /api/attendance?code=1423&group=g1&status=start|stop`. A code is
/// generated when `start` is sent without one.
pub async fn post_attendance(
    State(state): State<AppState>,
    Extension(who): Extension<Principal>,
    Extension(ticket): Extension<AuditTicket>,
    ApiQuery(q): ApiQuery<AttendanceQuery>,
) -> ApiResult {
    let group = q
        .group
        .filter(|g| !g.is_empty())
        .ok_or_else(|| ApiError::bad_request("missing parameter group"))?;
    let kind = match q.status.as_deref() {
        Some("start") => {
            let code = match q.code {
                Some(c) => AttendanceCode::parse(&c)
                    .map_err(|e| ApiError::bad_request(e.to_string()))?
                    .as_str()
                    .to_owned(),
                None => AttendanceCode::random(&mut rand::rng()).as_str().to_owned(),
            };
            CommandKind::StartAttendance {
                group_id: group.into(),
                code,
            }
        }
        Some("stop") => CommandKind::StopAttendance {
            group_id: group.into(),
        },
        _ => return Err(ApiError::bad_request("status must be start or stop")),
    };
    let (_, rt) = state.select(q.bot.as_deref())?;
    state.dispatch(&who, &ticket, &rt, kind).await
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimpleSurveyBody {
    channel_id: ChannelId,
    question: String,
    #[serde(default, alias = "duration_secs")]
    duration: Option<u64>,
    #[serde(default)]
    bot_id: Option<String>,
}

pub async fn post_simple_survey(
    State(state): State<AppState>,
    Extension(who): Extension<Principal>,
    Extension(ticket): Extension<AuditTicket>,
    ApiJson(b): ApiJson<SimpleSurveyBody>,
) -> ApiResult {
    let (_, rt) = state.select(b.bot_id.as_deref())?;
    let kind = CommandKind::CreateSimpleSurvey {
        channel_id: b.channel_id,
        question: b.question,
        duration_secs: b.duration,
    };
    state.dispatch(&who, &ticket, &rt, kind).await
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComplexSurveyBody {
    channel_id: ChannelId,
    title: String,
    questions: Vec<QuestionSpec>,
    #[serde(default, alias = "duration_secs")]
    duration: Option<u64>,
    #[serde(default)]
    bot_id: Option<String>,
}

pub async fn post_complex_survey(
    State(state): State<AppState>,
    Extension(who): Extension<Principal>,
    Extension(ticket): Extension<AuditTicket>,
    ApiJson(b): ApiJson<ComplexSurveyBody>,
) -> ApiResult {
    let (_, rt) = state.select(b.bot_id.as_deref())?;
    let kind = CommandKind::CreateComplexSurvey {
        channel_id: b.channel_id,
        title: b.title,
        questions: b.questions,
        duration_secs: b.duration,
    };
    state.dispatch(&who, &ticket, &rt, kind).await
}

pub async fn close_survey(
    State(state): State<AppState>,
    Extension(who): Extension<Principal>,
    Extension(ticket): Extension<AuditTicket>,
    Path(id): Path<String>,
) -> ApiResult {
    let rt = state.running(&owner_of(&id)?).map_err(|_| ApiError::bad_request(format!("unknown id {id}")))?;
    let kind = CommandKind::CloseSurvey { survey_id: id.into() };
    state.dispatch(&who, &ticket, &rt, kind).await
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeedbackBody {
    channel_id: ChannelId,
    label: String,
    #[serde(default)]
    bot_id: Option<String>,
}

pub async fn post_feedback(
    State(state): State<AppState>,
    Extension(who): Extension<Principal>,
    Extension(ticket): Extension<AuditTicket>,
    ApiJson(b): ApiJson<FeedbackBody>,
) -> ApiResult {
    let (_, rt) = state.select(b.bot_id.as_deref())?;
    let kind = CommandKind::StartFeedback {
        channel_id: b.channel_id,
        label: b.label,
    };
    state.dispatch(&who, &ticket, &rt, kind).await
}

pub async fn close_feedback(
    State(state): State<AppState>,
    Extension(who): Extension<Principal>,
    Extension(ticket): Extension<AuditTicket>,
    Path(id): Path<String>,
) -> ApiResult {
    let rt = state.running(&owner_of(&id)?).map_err(|_| ApiError::bad_request(format!("unknown id {id}")))?;
    let kind = CommandKind::CloseFeedback { feedback_id: id.into() };
    state.dispatch(&who, &ticket, &rt, kind).await
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PingBody {
    #[serde(default)]
    bot_id: Option<String>,
}

pub async fn ping(
    State(state): State<AppState>,
    Extension(who): Extension<Principal>,
    Extension(ticket): Extension<AuditTicket>,
    body: axum::body::Bytes,
) -> ApiResult {
    // The body is optional for ping.
    let b: PingBody = if body.iter().all(u8::is_ascii_whitespace) {
        PingBody::default()
    } else {
        serde_json::from_slice(&body).map_err(|e| ApiError::bad_request(format!("invalid request body: {e}")))?
    };
    let (_, rt) = state.select(b.bot_id.as_deref())?;
    state.dispatch(&who, &ticket, &rt, CommandKind::Ping).await
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SendMessageBody {
    member_id: MemberId,
    text: String,
    #[serde(default)]
    bot_id: Option<String>,
}

pub async fn send_message(
    State(state): State<AppState>,
    Extension(who): Extension<Principal>,
    Extension(ticket): Extension<AuditTicket>,
    ApiJson(b): ApiJson<SendMessageBody>,
) -> ApiResult {
    let (_, rt) = state.select(b.bot_id.as_deref())?;
    let kind = CommandKind::SendGreeting {
        member_id: b.member_id,
        text: b.text,
    };
    state.dispatch(&who, &ticket, &rt, kind).await
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GiveRoleBody {
    member_id: MemberId,
    role_id: RoleId,
    #[serde(default)]
    bot_id: Option<String>,
}

pub async fn give_role(
    State(state): State<AppState>,
    Extension(who): Extension<Principal>,
    Extension(ticket): Extension<AuditTicket>,
    ApiJson(b): ApiJson<GiveRoleBody>,
) -> ApiResult {
    let (_, rt) = state.select(b.bot_id.as_deref())?;
    let kind = CommandKind::GiveRole {
        member_id: b.member_id,
        role_id: b.role_id,
    };
    state.dispatch(&who, &ticket, &rt, kind).await
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClearMessagesBody {
    channel_id: ChannelId,
    count: u32,
    #[serde(default)]
    bot_id: Option<String>,
}

pub async fn clear_messages(
    State(state): State<AppState>,
    Extension(who): Extension<Principal>,
    Extension(ticket): Extension<AuditTicket>,
    ApiJson(b): ApiJson<ClearMessagesBody>,
) -> ApiResult {
    let (_, rt) = state.select(b.bot_id.as_deref())?;
    let kind = CommandKind::ClearMessages {
        channel_id: b.channel_id,
        count: b.count,
    };
    state.dispatch(&who, &ticket, &rt, kind).await
}

// ----- bot lifecycle -------------------------------------------------------

fn lifecycle_event(state: &AppState, who: &Principal, action: &str, bot: &str) -> AuditEvent {
    AuditEvent::new(state.clock.now(), who.key_id.clone(), action).param("bot_id", bot)
}

fn bot_json(state: &AppState, bot: &edubot_core::domain::BotInstance) -> Value {
    let mut v = json!(bot);
    if let Some(p) = state.bots.presence(&bot.id) {
        v["presence"] = json!(p);
    }
    v
}

pub async fn create_bot(
    State(state): State<AppState>,
    Extension(who): Extension<Principal>,
    Extension(ticket): Extension<AuditTicket>,
    ApiJson(mut req): ApiJson<CreateBot>,
) -> ApiResult {
    let token = req.token.take();
    let result = state.bots.create(req);
    ticket.consume();
    match result {
        Ok(bot) => {
            if let Some(token) = token {
                if let Err(e) = state.secrets.set_bot_token(&bot.token_ref, token) {
                    tracing::error!(bot = %bot.id, error = %e, "failed to store bot token");
                }
            }
            state.record(
                lifecycle_event(&state, &who, "bot.create", bot.id.as_str())
                    .param("name", &bot.name)
                    .detail(format!("bot {} created", bot.id)),
            );
            Ok(ApiResponse::success(
                format!("Bot {} created", bot.id),
                Some(json!({ "bot_id": bot.id, "bot": bot_json(&state, &bot) })),
            ))
        }
        Err(e) => {
            state.record(lifecycle_event(&state, &who, "bot.create", "").failed(e.to_string()));
            Err(e.into())
        }
    }
}

pub async fn list_bots(State(state): State<AppState>) -> ApiResult {
    let bots: Vec<Value> = state.bots.list().iter().map(|b| bot_json(&state, b)).collect();
    Ok(ApiResponse::success(format!("{} bots", bots.len()), Some(json!({ "bots": bots }))))
}

pub async fn start_bot(
    State(state): State<AppState>,
    Extension(who): Extension<Principal>,
    Extension(ticket): Extension<AuditTicket>,
    Path(id): Path<String>,
) -> ApiResult {
    let result = state.bots.start(&BotId::new(id.clone()));
    lifecycle_result(&state, &who, &ticket, "bot.start", &id, result, "started")
}

pub async fn stop_bot(
    State(state): State<AppState>,
    Extension(who): Extension<Principal>,
    Extension(ticket): Extension<AuditTicket>,
    Path(id): Path<String>,
) -> ApiResult {
    let result = state.bots.stop(&BotId::new(id.clone())).await;
    lifecycle_result(&state, &who, &ticket, "bot.stop", &id, result, "stopped")
}

pub async fn delete_bot(
    State(state): State<AppState>,
    Extension(who): Extension<Principal>,
    Extension(ticket): Extension<AuditTicket>,
    Path(id): Path<String>,
) -> ApiResult {
    let result = state.bots.delete(&BotId::new(id.clone()));
    if let Ok(bot) = &result {
        if let Err(e) = state.secrets.remove(bot.token_ref.as_str()) {
            tracing::error!(bot = %bot.id, error = %e, "failed to remove bot token");
        }
    }
    lifecycle_result(&state, &who, &ticket, "bot.delete", &id, result, "deleted")
}

fn lifecycle_result(
    state: &AppState,
    who: &Principal,
    ticket: &AuditTicket,
    action: &str,
    id: &str,
    result: Result<edubot_core::domain::BotInstance, edubot_core::engine::EngineError>,
    verb: &str,
) -> ApiResult {
    ticket.consume();
    match result {
        Ok(bot) => {
            let message = format!("Bot {id} {verb}");
            state.record(lifecycle_event(state, who, action, id).detail(message.clone()));
            Ok(ApiResponse::success(
                message,
                Some(json!({ "bot_id": bot.id, "state": bot.state, "bot": bot_json(state, &bot) })),
            ))
        }
        Err(e) => {
            state.record(lifecycle_event(state, who, action, id).failed(e.to_string()));
            Err(e.into())
        }
    }
}
