//! Shared state, middleware and router assembly.

use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

use axum::extract::{Request, State};
use axum::http::header::{AUTHORIZATION, CONTENT_TYPE, RETRY_AFTER};
use axum::http::{HeaderValue, Method};
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::{delete, get, post};
use axum::Router;
use edubot_core::clock::Clock;
use edubot_core::domain::{AuditEvent, BotId};
use edubot_core::engine::{AuditSink, Command, CommandKind, DispatchError};
use tower_http::cors::{AllowOrigin, CorsLayer};

use crate::auth::{KeyStore, Principal, RateLimiter};
use crate::bots::{BotManager, Runtime};
use crate::response::{ApiError, ApiResponse, ErrorMessage};
use crate::routes;
use crate::secrets::SecretStore;

pub struct Shared {
    pub bots: BotManager,
    pub keys: KeyStore,
    pub limiter: RateLimiter,
    pub audit: Arc<dyn AuditSink>,
    pub secrets: SecretStore,
    pub clock: Arc<dyn Clock>,
}

#[derive(Clone)]
pub struct AppState(pub Arc<Shared>);

impl std::ops::Deref for AppState {
    type Target = Shared;

    fn deref(&self) -> &Shared {
        &self.0
    }
}

impl AppState {
    /// Resolves the bot a request addresses: the named one, or the only
    /// running bot when none is named.
    pub fn select(&self, bot: Option<&str>) -> Result<(BotId, Runtime), ApiError> {
        match bot.filter(|b| !b.is_empty()) {
            Some(id) => {
                let id = BotId::new(id);
                self.running(&id).map(|rt| (id, rt))
            }
            None => {
                let running = self.bots.running();
                match running.as_slice() {
                    [] => Err(ApiError::bad_request(
                        "no bot is running; start one with POST /api/bots/{id}/start",
                    )),
                    [only] => self.running(only).map(|rt| (only.clone(), rt)),
                    many => Err(ApiError::bad_request(format!(
                        "several bots are running ({}); name one with the bot parameter",
                        many.iter().map(|b| b.as_str()).collect::<Vec<_>>().join(", ")
                    ))),
                }
            }
        }
    }

    pub fn running(&self, id: &BotId) -> Result<Runtime, ApiError> {
        if self.bots.get(id).is_none() {
            return Err(ApiError::bad_request(format!("unknown bot {id}")));
        }
        self.bots
            .runtime(id)
            .ok_or_else(|| ApiError::bad_request(format!("bot {id} is not running")))
    }

    /// Sends a command to a running bot's engine. The engine audits every
    /// command it receives, so the request's audit ticket is consumed unless
    /// the engine was never reached.
    pub async fn dispatch(
        &self,
        who: &Principal,
        ticket: &AuditTicket,
        rt: &Runtime,
        kind: CommandKind,
    ) -> Result<ApiResponse, ApiError> {
        match rt.handle.execute(Command::new(who.key_id.clone(), kind)).await {
            Ok(r) => {
                ticket.consume();
                Ok(ApiResponse::success(r.message, r.data))
            }
            Err(DispatchError::Stopped) => Err(DispatchError::Stopped.into()),
            Err(e) => {
                ticket.consume();
                Err(e.into())
            }
        }
    }

    pub fn record(&self, ev: AuditEvent) {
        self.audit.record(ev);
    }
}

/// Marks whether a mutating request has been audited by the time its
/// response leaves the handler.
#[derive(Clone, Default)]
pub struct AuditTicket(Arc<AtomicBool>);

impl AuditTicket {
    pub fn consume(&self) {
        self.0.store(true, Ordering::SeqCst);
    }

    pub fn consumed(&self) -> bool {
        self.0.load(Ordering::SeqCst)
    }
}

async fn authenticate(State(state): State<AppState>, mut req: Request, next: Next) -> Response {
    match state.keys.authenticate(req.headers()) {
        Some(p) => {
            req.extensions_mut().insert(p);
            next.run(req).await
        }
        None => {
            tracing::warn!(method = %req.method(), path = %req.uri().path(), "rejected request without a valid API key");
            ApiError::forbidden("missing or invalid API key").into_response()
        }
    }
}

async fn rate_limit(State(state): State<AppState>, req: Request, next: Next) -> Response {
    let who = req.extensions().get::<Principal>().cloned().expect("authenticated");
    match state.limiter.check(&who.key_id) {
        Ok(()) => next.run(req).await,
        Err(wait) => {
            let limit = state.limiter.limit();
            let message = format!(
                "rate limit of {} requests per {} s exceeded; retry in {:.1} s",
                limit.max_requests,
                limit.window.as_secs(),
                wait.as_secs_f64()
            );
            state.record(
                AuditEvent::new(state.clock.now(), who.key_id, "rate_limited")
                    .param("method", req.method())
                    .param("path", req.uri().path())
                    .param("status", 429)
                    .failed(message.clone()),
            );
            let mut resp = ApiError::too_many_requests(message).into_response();
            let secs = wait.as_secs() + u64::from(wait.subsec_nanos() > 0);
            resp.headers_mut().insert(RETRY_AFTER, HeaderValue::from(secs));
            resp
        }
    }
}

/// Audits mutating requests that did not reach an engine (bad parameters,
/// stopped bots), so every authenticated mutating request leaves exactly
/// one audit event.
async fn audit_requests(State(state): State<AppState>, mut req: Request, next: Next) -> Response {
    if !matches!(*req.method(), Method::POST | Method::DELETE | Method::PUT | Method::PATCH) {
        return next.run(req).await;
    }
    let who = req.extensions().get::<Principal>().cloned().expect("authenticated");
    let method = req.method().clone();
    let path = req.uri().path().to_owned();
    let ticket = AuditTicket::default();
    req.extensions_mut().insert(ticket.clone());
    let resp = next.run(req).await;
    if !ticket.consumed() {
        let mut ev = AuditEvent::new(state.clock.now(), who.key_id, "api.request")
            .param("method", method)
            .param("path", path)
            .param("status", resp.status().as_u16());
        if let Some(ErrorMessage(m)) = resp.extensions().get::<ErrorMessage>() {
            ev = ev.failed(m.clone());
        }
        state.record(ev);
    }
    resp
}

async fn unknown_route(req: Request) -> ApiError {
    ApiError::bad_request(format!("no route for {} {}", req.method(), req.uri().path()))
}

async fn method_not_allowed(req: Request) -> ApiError {
    ApiError::bad_request(format!("method {} is not allowed on {}", req.method(), req.uri().path()))
}

pub fn router(state: AppState, console_origin: Option<&str>) -> Router {
    let public = Router::new()
        .route("/api/health", get(routes::health))
        .method_not_allowed_fallback(method_not_allowed);

    let protected = Router::new()
        .route("/api/attendance", post(routes::post_attendance))
        .route("/api/attendance/sessions", get(routes::list_sessions))
        .route("/api/attendance/sessions/{id}", get(routes::get_session))
        .route("/api/surveys", get(routes::list_surveys))
        .route("/api/surveys/simple", post(routes::post_simple_survey))
        .route("/api/surveys/complex", post(routes::post_complex_survey))
        .route("/api/surveys/{id}/results", get(routes::survey_results))
        .route("/api/surveys/{id}/close", post(routes::close_survey))
        .route("/api/feedback", post(routes::post_feedback).get(routes::list_feedback))
        .route("/api/feedback/{id}/results", get(routes::feedback_results))
        .route("/api/feedback/{id}/close", post(routes::close_feedback))
        .route("/api/bots", post(routes::create_bot).get(routes::list_bots))
        .route("/api/bots/{id}", delete(routes::delete_bot))
        .route("/api/bots/{id}/start", post(routes::start_bot))
        .route("/api/bots/{id}/stop", post(routes::stop_bot))
        .route("/api/commands/ping", post(routes::ping))
        .route("/api/commands/send-message", post(routes::send_message))
        .route("/api/commands/give-role", post(routes::give_role))
        .route("/api/commands/clear-messages", post(routes::clear_messages))
        .fallback(unknown_route)
        .method_not_allowed_fallback(method_not_allowed)
        .layer(middleware::from_fn_with_state(state.clone(), audit_requests))
        .layer(middleware::from_fn_with_state(state.clone(), rate_limit))
        .layer(middleware::from_fn_with_state(state.clone(), authenticate));

    let mut app = public.merge(protected).with_state(state);
    if let Some(origin) = console_origin {
        match origin.parse::<HeaderValue>() {
            Ok(origin) => {
                app = app.layer(
                    CorsLayer::new()
                        .allow_origin(AllowOrigin::predicate(move |o: &HeaderValue, _| *o == origin))
                        .allow_methods([Method::GET, Method::POST, Method::DELETE, Method::OPTIONS])
                        .allow_headers([AUTHORIZATION, CONTENT_TYPE])
                        .max_age(std::time::Duration::from_secs(600)),
                );
            }
            Err(_) => tracing::warn!(%origin, "ignoring invalid console origin"),
        }
    }
    app
}
