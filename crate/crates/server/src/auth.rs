//! Bearer API-key authentication and the per-key sliding-window rate limiter.

use std::collections::{BTreeMap, HashMap, VecDeque};
use std::sync::{Mutex, RwLock};
use std::time::{Duration, Instant};

use axum::http::header::AUTHORIZATION;
use axum::http::HeaderMap;
use edubot_core::domain::{ApiKey, RawApiKey};

use crate::config::RateLimit;

/// The authenticated caller, stored as a request extension.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Principal {
    pub key_id: String,
}

/// Enabled API keys by key id.
#[derive(Default)]
pub struct KeyStore {
    keys: RwLock<BTreeMap<String, ApiKey>>,
}

impl KeyStore {
    pub fn new(keys: BTreeMap<String, ApiKey>) -> Self {
        Self {
            keys: RwLock::new(keys),
        }
    }

    pub fn insert(&self, key: ApiKey) {
        self.keys.write().unwrap().insert(key.key_id.clone(), key);
    }

    pub fn authenticate_raw(&self, raw: &str) -> Option<Principal> {
        let (id, secret) = RawApiKey::parse(raw)?;
        let keys = self.keys.read().unwrap();
        let key = keys.get(id)?;
        (key.enabled && key.verify(secret)).then(|| Principal {
            key_id: key.key_id.clone(),
        })
    }

    /// Checks an `Authorization: Bearer <key>` header.
    pub fn authenticate(&self, headers: &HeaderMap) -> Option<Principal> {
        let value = headers.get(AUTHORIZATION)?.to_str().ok()?;
        let (scheme, raw) = value.split_once(' ')?;
        if !scheme.eq_ignore_ascii_case("bearer") {
            return None;
        }
        self.authenticate_raw(raw.trim())
    }
}

/// Sliding-window limiter: a key may make at most `max_requests` accepted
/// requests in any window of length `window`. Rejected requests do not
/// count against the window.
pub struct RateLimiter {
    limit: RateLimit,
    hits: Mutex<HashMap<String, VecDeque<Instant>>>,
}

impl RateLimiter {
    pub fn new(limit: RateLimit) -> Self {
        Self {
            limit,
            hits: Mutex::new(HashMap::new()),
        }
    }

    pub fn limit(&self) -> RateLimit {
        self.limit
    }

    pub fn check(&self, key: &str) -> Result<(), Duration> {
        self.check_at(key, Instant::now())
    }

    /// Records a request at `now` if allowed; otherwise returns how long
    /// until the oldest request leaves the window.
    pub fn check_at(&self, key: &str, now: Instant) -> Result<(), Duration> {
        let mut hits = self.hits.lock().unwrap();
        let q = hits.entry(key.to_owned()).or_default();
        while q
            .front()
            .is_some_and(|t| now.saturating_duration_since(*t) >= self.limit.window)
        {
            q.pop_front();
        }
        if q.len() >= self.limit.max_requests {
            let oldest = *q.front().expect("window is full");
            return Err(self.limit.window - now.saturating_duration_since(oldest));
        }
        q.push_back(now);
        Ok(())
    }
}
