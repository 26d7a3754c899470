//! Server configuration, read from the environment.

use std::net::SocketAddr;
use std::path::PathBuf;
use std::time::Duration;

use edubot_core::persistence::{DataLayout, KdfParams};

pub const ENV_BIND: &str = "EDUBOT_BIND";
pub const ENV_DATA_DIR: &str = "EDUBOT_DATA_DIR";
pub const ENV_SECRETS: &str = "EDUBOT_SECRETS";
pub const ENV_PASSPHRASE: &str = "EDUBOT_SECRETS_PASSPHRASE";
pub const ENV_CONSOLE_ORIGIN: &str = "EDUBOT_CONSOLE_ORIGIN";
pub const ENV_RATE_LIMIT: &str = "EDUBOT_RATE_LIMIT";

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("{name} is not set")]
    Missing { name: &'static str },
    #[error("{name}={value:?} is invalid: {reason}")]
    Invalid {
        name: &'static str,
        value: String,
        reason: String,
    },
}

/// Requests allowed per key within a sliding window.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RateLimit {
    pub max_requests: usize,
    pub window: Duration,
}

impl Default for RateLimit {
    fn default() -> Self {
        Self {
            max_requests: 30,
            window: Duration::from_secs(10),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ServerConfig {
    pub bind: SocketAddr,
    pub data_dir: PathBuf,
    /// Defaults to `<data_dir>/.secrets.json`.
    pub secrets_path: PathBuf,
    pub passphrase: String,
    /// Browser origin allowed by CORS; `None` disables CORS headers.
    pub console_origin: Option<String>,
    pub rate_limit: RateLimit,
    pub kdf: KdfParams,
}

impl ServerConfig {
    /// Config with defaults for everything but the data directory and passphrase.
    pub fn new(data_dir: impl Into<PathBuf>, passphrase: impl Into<String>) -> Self {
        let data_dir = data_dir.into();
        Self {
            bind: SocketAddr::from(([127, 0, 0, 1], 8080)),
            secrets_path: DataLayout::new(&data_dir).secrets_path(),
            data_dir,
            passphrase: passphrase.into(),
            console_origin: None,
            rate_limit: RateLimit::default(),
            kdf: KdfParams::default(),
        }
    }

    pub fn layout(&self) -> DataLayout {
        DataLayout::new(&self.data_dir)
    }

    /// Reads `EDUBOT_*` variables through `get`, so tests need not touch
    /// the process environment.
    pub fn from_lookup(get: impl Fn(&str) -> Option<String>) -> Result<Self, ConfigError> {
        let passphrase = get(ENV_PASSPHRASE)
            .filter(|p| !p.is_empty())
            .ok_or(ConfigError::Missing { name: ENV_PASSPHRASE })?;
        let data_dir = get(ENV_DATA_DIR).unwrap_or_else(|| "data".into());
        let mut cfg = Self::new(data_dir, passphrase);
        if let Some(bind) = get(ENV_BIND) {
            cfg.bind = bind.parse().map_err(|e: std::net::AddrParseError| ConfigError::Invalid {
                name: ENV_BIND,
                value: bind.clone(),
                reason: e.to_string(),
            })?;
        }
        if let Some(path) = get(ENV_SECRETS) {
            cfg.secrets_path = path.into();
        }
        cfg.console_origin = get(ENV_CONSOLE_ORIGIN).filter(|o| !o.is_empty());
        if let Some(raw) = get(ENV_RATE_LIMIT) {
            cfg.rate_limit = parse_rate_limit(&raw).map_err(|reason| ConfigError::Invalid {
                name: ENV_RATE_LIMIT,
                value: raw.clone(),
                reason,
            })?;
        }
        Ok(cfg)
    }

    pub fn from_env() -> Result<Self, ConfigError> {
        Self::from_lookup(|k| std::env::var(k).ok())
    }
}

/// Parses `<requests>/<seconds>`, e.g. `30/10`.
fn parse_rate_limit(raw: &str) -> Result<RateLimit, String> {
    let (n, secs) = raw.split_once('/').ok_or("expected <requests>/<seconds>")?;
    let max_requests: usize = n.trim().parse().map_err(|_| "request count is not a number")?;
    let secs: u64 = secs.trim().parse().map_err(|_| "window is not a number of seconds")?;
    if max_requests == 0 || secs == 0 {
        return Err("both parts must be positive".into());
    }
    Ok(RateLimit {
        max_requests,
        window: Duration::from_secs(secs),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashMap;

    fn lookup(pairs: &[(&str, &str)]) -> impl Fn(&str) -> Option<String> {
        let map: HashMap<String, String> =
            pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect();
        move |k| map.get(k).cloned()
    }

    #[test]
    fn defaults_and_overrides() {
        let cfg = ServerConfig::from_lookup(lookup(&[(ENV_PASSPHRASE, "pw")])).unwrap();
        assert_eq!(cfg.bind.to_string(), "127.0.0.1:8080");
        assert_eq!(cfg.secrets_path, PathBuf::from("data/.secrets.json"));
        assert_eq!(cfg.rate_limit, RateLimit::default());
        assert!(cfg.console_origin.is_none());

        let cfg = ServerConfig::from_lookup(lookup(&[
            (ENV_PASSPHRASE, "pw"),
            (ENV_BIND, "0.0.0.0:9000"),
            (ENV_DATA_DIR, "/srv/edubot"),
            (ENV_CONSOLE_ORIGIN, "http://localhost:5173"),
            (ENV_RATE_LIMIT, "100/5"),
        ]))
        .unwrap();
        assert_eq!(cfg.bind.port(), 9000);
        assert_eq!(cfg.secrets_path, PathBuf::from("/srv/edubot/.secrets.json"));
        assert_eq!(cfg.console_origin.as_deref(), Some("http://localhost:5173"));
        assert_eq!(cfg.rate_limit.max_requests, 100);
        assert_eq!(cfg.rate_limit.window, Duration::from_secs(5));
    }

    #[test]
    fn rejects_bad_values() {
        assert!(matches!(
            ServerConfig::from_lookup(lookup(&[])),
            Err(ConfigError::Missing { .. })
        ));
        assert!(ServerConfig::from_lookup(lookup(&[(ENV_PASSPHRASE, "pw"), (ENV_BIND, "nope")])).is_err());
        for bad in ["30", "0/10", "30/0", "x/10"] {
            assert!(parse_rate_limit(bad).is_err(), "{bad}");
        }
    }
}
