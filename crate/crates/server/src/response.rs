//! Response envelope and the error-to-status mapping.
//!
//! Every response body is an [`ApiResponse`]. Failures map onto four codes:
//! 400 for validation errors (including unknown ids and invalid state
//! transitions), 403 for authentication errors, 429 when the rate limit is
//! exceeded and 500 for server-side failures.

use axum::extract::rejection::{JsonRejection, QueryRejection};
use axum::extract::{FromRequest, FromRequestParts, Request};
use axum::http::request::Parts;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use edubot_core::engine::{DispatchError, EngineError};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Success,
    Error,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApiResponse {
    pub status: Status,
    pub message: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data: Option<Value>,
}

impl ApiResponse {
    pub fn success(message: impl Into<String>, data: Option<Value>) -> Self {
        Self {
            status: Status::Success,
            message: message.into(),
            data,
        }
    }

    pub fn error(message: impl Into<String>) -> Self {
        Self {
            status: Status::Error,
            message: message.into(),
            data: None,
        }
    }
}

impl IntoResponse for ApiResponse {
    fn into_response(self) -> Response {
        let code = match self.status {
            Status::Success => StatusCode::OK,
            Status::Error => StatusCode::INTERNAL_SERVER_ERROR,
        };
        (code, Json(self)).into_response()
    }
}

/// Error message attached to error responses as an extension, so the audit
/// middleware can record it without parsing the body.
#[derive(Debug, Clone)]
pub struct ErrorMessage(pub String);

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ApiError {
    pub code: StatusCode,
    pub message: String,
}

impl ApiError {
    pub fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, message)
    }

    pub fn forbidden(message: impl Into<String>) -> Self {
        Self::new(StatusCode::FORBIDDEN, message)
    }

    pub fn too_many_requests(message: impl Into<String>) -> Self {
        Self::new(StatusCode::TOO_MANY_REQUESTS, message)
    }

    pub fn internal(message: impl Into<String>) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, message)
    }

    fn new(code: StatusCode, message: impl Into<String>) -> Self {
        let mut message = message.into();
        if message.is_empty() {
            message = code.canonical_reason().unwrap_or("error").to_owned();
        }
        Self { code, message }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let mut resp = (self.code, Json(ApiResponse::error(self.message.clone()))).into_response();
        resp.extensions_mut().insert(ErrorMessage(self.message));
        resp
    }
}

impl From<EngineError> for ApiError {
    fn from(e: EngineError) -> Self {
        match e {
            EngineError::Conflict(m) | EngineError::NotFound(m) | EngineError::InvalidInput(m) => {
                Self::bad_request(m)
            }
            EngineError::Unavailable(_) | EngineError::Internal(_) => Self::internal(e.to_string()),
        }
    }
}

impl From<DispatchError> for ApiError {
    fn from(e: DispatchError) -> Self {
        match e {
            DispatchError::Engine(e) => e.into(),
            DispatchError::DeadlineExceeded | DispatchError::Stopped => Self::internal(e.to_string()),
        }
    }
}

pub type ApiResult = Result<ApiResponse, ApiError>;

/// `Json` whose rejections are reported as 400 [`ApiResponse`]s.
pub struct ApiJson<T>(pub T);

impl<S, T> FromRequest<S> for ApiJson<T>
where
    T: DeserializeOwned,
    S: Send + Sync,
{
    type Rejection = ApiError;

    async fn from_request(req: Request, state: &S) -> Result<Self, Self::Rejection> {
        match Json::<T>::from_request(req, state).await {
            Ok(Json(v)) => Ok(Self(v)),
            Err(e) => Err(ApiError::bad_request(json_rejection_message(&e))),
        }
    }
}

fn json_rejection_message(e: &JsonRejection) -> String {
    match e {
        JsonRejection::MissingJsonContentType(_) => {
            "expected a JSON body with content-type application/json".into()
        }
        other => format!("invalid request body: {}", other.body_text()),
    }
}

/// `Query` whose rejections are reported as 400 [`ApiResponse`]s.
pub struct ApiQuery<T>(pub T);

impl<S, T> FromRequestParts<S> for ApiQuery<T>
where
    T: DeserializeOwned,
    S: Send + Sync,
{
    type Rejection = ApiError;

    async fn from_request_parts(parts: &mut Parts, state: &S) -> Result<Self, Self::Rejection> {
        match axum::extract::Query::<T>::from_request_parts(parts, state).await {
            Ok(q) => Ok(Self(q.0)),
            Err(e) => Err(ApiError::bad_request(query_rejection_message(&e))),
        }
    }
}

fn query_rejection_message(e: &QueryRejection) -> String {
    format!("invalid query parameters: {}", e.body_text())
}
