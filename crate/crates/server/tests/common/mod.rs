#![allow(dead_code)]

use std::sync::Arc;

use edubot_core::clock::{Clock, SystemClock};
use edubot_core::domain::{AuditEvent, BotId, MemberId};
use edubot_core::gateway::{Behavior, SimPlatform};
use edubot_core::persistence::{read_audit_dir, KdfParams};
use edubot_server::secrets::SecretStore;
use edubot_server::{ApiResponse, RateLimit, RunningServer, ServerConfig};
use reqwest::{Method, StatusCode};
use serde_json::Value;

pub const PASSPHRASE: &str = "correct horse battery staple";
pub const ORIGIN: &str = "http://console.test";

pub struct TestServer {
    pub dir: tempfile::TempDir,
    pub server: Option<RunningServer>,
    pub key: String,
    pub client: reqwest::Client,
}

pub fn config(dir: &std::path::Path) -> ServerConfig {
    let mut cfg = ServerConfig::new(dir, PASSPHRASE);
    cfg.bind = "127.0.0.1:0".parse().unwrap();
    cfg.kdf = KdfParams::insecure_fast();
    cfg.console_origin = Some(ORIGIN.into());
    cfg
}

impl TestServer {
    pub async fn start() -> Self {
        Self::start_with(RateLimit::default()).await
    }

    pub async fn start_with(limit: RateLimit) -> Self {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = config(dir.path());
        cfg.rate_limit = limit;
        let store = SecretStore::open(&cfg.secrets_path, PASSPHRASE, cfg.kdf).unwrap();
        let (_, raw) = store.add_api_key("Instructor", Some("k1")).unwrap();
        drop(store);
        let server = RunningServer::start(&cfg, Arc::new(SystemClock)).await.unwrap();
        Self {
            dir,
            server: Some(server),
            key: raw.as_str().to_owned(),
            client: reqwest::Client::new(),
        }
    }

    /// Restarts on the same data directory.
    pub async fn restart(&mut self) {
        self.server.take().unwrap().shutdown().await;
        let cfg = config(self.dir.path());
        self.server = Some(RunningServer::start(&cfg, Arc::new(SystemClock) as Arc<dyn Clock>).await.unwrap());
    }

    pub fn srv(&self) -> &RunningServer {
        self.server.as_ref().unwrap()
    }

    pub async fn send(&self, method: Method, path: &str, key: Option<&str>, body: Option<Value>) -> (StatusCode, ApiResponse) {
        let mut req = self.client.request(method, self.srv().url(path));
        if let Some(k) = key {
            req = req.bearer_auth(k);
        }
        if let Some(b) = body {
            req = req.json(&b);
        }
        let resp = req.send().await.unwrap();
        let status = resp.status();
        let body: ApiResponse = resp.json().await.unwrap();
        (status, body)
    }

    pub async fn get(&self, path: &str) -> (StatusCode, ApiResponse) {
        self.send(Method::GET, path, Some(&self.key.clone()), None).await
    }

    pub async fn post(&self, path: &str, body: Value) -> (StatusCode, ApiResponse) {
        self.send(Method::POST, path, Some(&self.key.clone()), Some(body)).await
    }

    pub async fn post_empty(&self, path: &str) -> (StatusCode, ApiResponse) {
        self.send(Method::POST, path, Some(&self.key.clone()), None).await
    }

    /// Creates and starts a bot with a generated guild; returns its id.
    pub async fn bot(&self, students: usize) -> String {
        let (code, r) = self
            .post("/api/bots", serde_json::json!({ "name": "Tutorial bot", "students": students }))
            .await;
        assert_eq!(code, StatusCode::OK, "{r:?}");
        let id = r.data.unwrap()["bot_id"].as_str().unwrap().to_owned();
        let (code, r) = self.post_empty(&format!("/api/bots/{id}/start")).await;
        assert_eq!(code, StatusCode::OK, "{r:?}");
        id
    }

    pub fn platform(&self, bot: &str) -> Arc<SimPlatform> {
        self.srv().state.bots.platform(&BotId::new(bot)).unwrap()
    }

    pub fn act(&self, bot: &str, member: &str, behavior: Behavior) {
        self.platform(bot).inject(&MemberId::new(member), &behavior).unwrap();
    }

    pub async fn sync(&self, bot: &str) {
        assert!(self.srv().state.bots.sync(&BotId::new(bot)).await);
    }

    pub fn audit(&self) -> Vec<AuditEvent> {
        self.srv().audit_log().flush();
        read_audit_dir(&self.dir.path().join("logs")).unwrap()
    }
}
