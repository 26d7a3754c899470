use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::Timestamp;

/// Replacement for redacted parameter values.
pub const REDACTED: &str = "[REDACTED]";

const SENSITIVE_FRAGMENTS: [&str; 3] = ["token", "key", "secret"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Success,
    Error,
}

/// One line of the operational audit trail.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditEvent {
    pub ts: Timestamp,
    /// API key id of the caller, or `system` for engine-originated events.
    pub actor: String,
    pub action: String,
    #[serde(default)]
    pub params: BTreeMap<String, String>,
    pub outcome: Outcome,
    #[serde(default)]
    pub detail: String,
}

impl AuditEvent {
    pub const SYSTEM: &'static str = "system";

    pub fn new(ts: Timestamp, actor: impl Into<String>, action: impl Into<String>) -> Self {
        Self {
            ts,
            actor: actor.into(),
            action: action.into(),
            params: BTreeMap::new(),
            outcome: Outcome::Success,
            detail: String::new(),
        }
    }

    pub fn param(mut self, key: impl Into<String>, value: impl ToString) -> Self {
        self.params.insert(key.into(), value.to_string());
        self
    }

    pub fn failed(mut self, detail: impl Into<String>) -> Self {
        self.outcome = Outcome::Error;
        self.detail = detail.into();
        self
    }

    pub fn detail(mut self, detail: impl Into<String>) -> Self {
        self.detail = detail.into();
        self
    }

    /// Replaces the value of any parameter whose name contains `token`,
    /// `key` or `secret` (case-insensitive).
    pub fn redact(&mut self) {
        for (k, v) in self.params.iter_mut() {
            let lower = k.to_ascii_lowercase();
            if SENSITIVE_FRAGMENTS.iter().any(|f| lower.contains(f)) {
                *v = REDACTED.to_owned();
            }
        }
    }

    pub fn redacted(mut self) -> Self {
        self.redact();
        self
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::Utc;

    #[test]
    fn redacts_sensitive_params() {
        let ev = AuditEvent::new(Utc::now(), "k1", "bots.create")
            .param("bot_token", "abc.def")
            .param("API_Key", "ebk_x")
            .param("client_secret", "s")
            .param("group", "g1")
            .redacted();
        assert_eq!(ev.params["bot_token"], REDACTED);
        assert_eq!(ev.params["API_Key"], REDACTED);
        assert_eq!(ev.params["client_secret"], REDACTED);
        assert_eq!(ev.params["group"], "g1");
    }
}
