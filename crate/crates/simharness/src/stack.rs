//! A complete server on a temporary data directory.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use edubot_core::clock::{Clock, ManualClock, SystemClock};
use edubot_core::persistence::KdfParams;
use edubot_server::bots::BotManager;
use edubot_server::secrets::{AddKeyError, SecretStore};
use edubot_server::{RateLimit, RunningServer, ServerConfig, StartError};

use crate::client::ApiClient;

const PASSPHRASE: &str = "simharness passphrase";

#[derive(Debug, thiserror::Error)]
pub enum StackError {
    #[error("cannot create data directory: {0}")]
    Io(#[from] std::io::Error),
    #[error("cannot provision API key: {0}")]
    Key(#[from] AddKeyError),
    #[error(transparent)]
    Start(#[from] StartError),
}

#[derive(Clone)]
pub struct StackOptions {
    /// One API key is provisioned per id.
    pub key_ids: Vec<String>,
    pub rate_limit: RateLimit,
    /// Server and platform clock; the system clock when `None`.
    pub clock: Option<Arc<ManualClock>>,
}

impl Default for StackOptions {
    fn default() -> Self {
        Self {
            key_ids: vec!["k1".into()],
            rate_limit: RateLimit::default(),
            clock: None,
        }
    }
}

impl StackOptions {
    pub fn with_keys(n: usize) -> Self {
        Self {
            key_ids: (1..=n).map(|i| format!("k{i}")).collect(),
            ..Self::default()
        }
    }
}

pub struct Stack {
    dir: tempfile::TempDir,
    server: Option<RunningServer>,
    keys: BTreeMap<String, String>,
    clock: Option<Arc<ManualClock>>,
}

impl Stack {
    pub async fn start(opts: StackOptions) -> Result<Self, StackError> {
        let dir = tempfile::tempdir()?;
        let mut cfg = ServerConfig::new(dir.path(), PASSPHRASE);
        cfg.bind = "127.0.0.1:0".parse().expect("valid address");
        cfg.kdf = KdfParams::insecure_fast();
        cfg.rate_limit = opts.rate_limit;
        let store = SecretStore::open(&cfg.secrets_path, PASSPHRASE, cfg.kdf)
            .map_err(|e| StackError::Start(e.into()))?;
        let mut keys = BTreeMap::new();
        for id in &opts.key_ids {
            let (_, raw) = store.add_api_key(&format!("Instructor {id}"), Some(id))?;
            keys.insert(id.clone(), raw.as_str().to_owned());
        }
        drop(store);
        let clock: Arc<dyn Clock> = match &opts.clock {
            Some(c) => c.clone(),
            None => Arc::new(SystemClock),
        };
        let server = RunningServer::start(&cfg, clock).await?;
        Ok(Self {
            dir,
            server: Some(server),
            keys,
            clock: opts.clock,
        })
    }

    pub fn server(&self) -> &RunningServer {
        self.server.as_ref().expect("server is running until shutdown")
    }

    pub fn bots(&self) -> &BotManager {
        &self.server().state.bots
    }

    pub fn base_url(&self) -> String {
        self.server().url("")
    }

    /// Client authenticated with the key provisioned for `key_id`.
    pub fn client(&self, key_id: &str) -> ApiClient {
        ApiClient::new(self.base_url(), self.keys.get(key_id).cloned())
    }

    pub fn raw_key(&self, key_id: &str) -> Option<&str> {
        self.keys.get(key_id).map(String::as_str)
    }

    pub fn manual_clock(&self) -> Option<&Arc<ManualClock>> {
        self.clock.as_ref()
    }

    pub fn data_dir(&self) -> &Path {
        self.dir.path()
    }

    /// Flushes the audit log and the registry.
    pub fn flush(&self) {
        self.server().audit_log().flush();
        self.bots().flush();
    }

    pub async fn shutdown(mut self) {
        if let Some(s) = self.server.take() {
            s.shutdown().await;
        }
    }
}
