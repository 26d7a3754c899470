//! HTTP client for the REST API that times every round trip.

use std::time::Instant;

use edubot_server::{ApiResponse, Status};
use reqwest::{Method, StatusCode};
use serde_json::Value;

#[derive(Debug, thiserror::Error)]
pub enum ClientError {
    #[error("cannot reach {url}: {source}")]
    Connect { url: String, source: reqwest::Error },
    #[error("{method} {path} failed: {source}")]
    Transport {
        method: Method,
        path: String,
        source: reqwest::Error,
    },
    #[error("{method} {path} returned a body that is not an API response: {reason}")]
    Body {
        method: Method,
        path: String,
        reason: String,
    },
    #[error("{method} {path} returned {status}: {message}")]
    Status {
        method: Method,
        path: String,
        status: StatusCode,
        message: String,
    },
}

/// One answered request.
#[derive(Debug, Clone)]
pub struct Reply {
    pub status: StatusCode,
    pub body: ApiResponse,
    /// Full round trip: connect (if needed), send, and read the body.
    pub latency_ms: f64,
}

impl Reply {
    pub fn is_success(&self) -> bool {
        self.status == StatusCode::OK && self.body.status == Status::Success
    }

    /// The `data` member, or `null`.
    pub fn data(&self) -> &Value {
        self.body.data.as_ref().unwrap_or(&Value::Null)
    }
}

#[derive(Debug, Clone)]
pub struct ApiClient {
    http: reqwest::Client,
    base: String,
    key: Option<String>,
}

impl ApiClient {
    pub fn new(base: impl Into<String>, key: Option<String>) -> Self {
        Self {
            http: reqwest::Client::new(),
            base: base.into().trim_end_matches('/').to_owned(),
            key,
        }
    }

    pub fn base(&self) -> &str {
        &self.base
    }

    pub fn without_key(&self) -> Self {
        Self {
            key: None,
            ..self.clone()
        }
    }

    /// Sends a request and parses the envelope, whatever the status code.
    pub async fn send(&self, method: Method, path: &str, body: Option<&Value>) -> Result<Reply, ClientError> {
        let url = format!("{}{}", self.base, path);
        let mut req = self.http.request(method.clone(), &url);
        if let Some(k) = &self.key {
            req = req.bearer_auth(k);
        }
        if let Some(b) = body {
            req = req.json(b);
        }
        let started = Instant::now();
        let resp = req.send().await.map_err(|source| {
            if source.is_connect() {
                ClientError::Connect { url: url.clone(), source }
            } else {
                ClientError::Transport {
                    method: method.clone(),
                    path: path.to_owned(),
                    source,
                }
            }
        })?;
        let status = resp.status();
        let bytes = resp.bytes().await.map_err(|source| ClientError::Transport {
            method: method.clone(),
            path: path.to_owned(),
            source,
        })?;
        let latency_ms = started.elapsed().as_secs_f64() * 1e3;
        let body: ApiResponse = serde_json::from_slice(&bytes).map_err(|e| ClientError::Body {
            method: method.clone(),
            path: path.to_owned(),
            reason: e.to_string(),
        })?;
        Ok(Reply {
            status,
            body,
            latency_ms,
        })
    }

    /// Like [`ApiClient::send`], turning anything but a success into an error.
    pub async fn expect(&self, method: Method, path: &str, body: Option<&Value>) -> Result<Reply, ClientError> {
        let reply = self.send(method.clone(), path, body).await?;
        if reply.is_success() {
            Ok(reply)
        } else {
            Err(ClientError::Status {
                method,
                path: path.to_owned(),
                status: reply.status,
                message: reply.body.message,
            })
        }
    }

    pub async fn get(&self, path: &str) -> Result<Reply, ClientError> {
        self.expect(Method::GET, path, None).await
    }

    pub async fn post(&self, path: &str, body: &Value) -> Result<Reply, ClientError> {
        self.expect(Method::POST, path, Some(body)).await
    }
}
