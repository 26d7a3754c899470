//! Process-level wiring: storage, secrets, bots and the listener.

use std::net::SocketAddr;
use std::sync::Arc;

use edubot_core::clock::Clock;
use edubot_core::persistence::{AuditLog, CsvExporter, SecretsError};
use tokio::net::TcpListener;
use tokio::sync::oneshot;
use tokio::task::JoinHandle;

use crate::app::{router, AppState, Shared};
use crate::auth::{KeyStore, RateLimiter};
use crate::bots::BotManager;
use crate::config::ServerConfig;
use crate::secrets::SecretStore;

#[derive(Debug, thiserror::Error)]
pub enum StartError {
    #[error("cannot prepare data directory: {0}")]
    Storage(#[from] std::io::Error),
    #[error(transparent)]
    Secrets(#[from] SecretsError),
}

/// A server bound to its listener and serving in the background.
pub struct RunningServer {
    pub addr: SocketAddr,
    pub state: AppState,
    audit: Arc<AuditLog>,
    stop: Option<oneshot::Sender<()>>,
    task: Option<JoinHandle<std::io::Result<()>>>,
}

impl RunningServer {
    /// Opens storage, loads keys and the bot registry, binds `config.bind`
    /// (port 0 picks a free port) and starts serving.
    pub async fn start(config: &ServerConfig, clock: Arc<dyn Clock>) -> Result<Self, StartError> {
        let layout = config.layout();
        layout.ensure()?;
        let secrets = SecretStore::open(&config.secrets_path, &config.passphrase, config.kdf)?;
        let keys = KeyStore::new(secrets.api_keys());
        let audit = Arc::new(AuditLog::open(layout.logs_dir())?);
        let bots = BotManager::open(
            &layout.registry_path(),
            audit.clone(),
            Arc::new(CsvExporter::new(layout.clone())),
            clock.clone(),
        )?;
        let state = AppState(Arc::new(Shared {
            bots,
            keys,
            limiter: RateLimiter::new(config.rate_limit),
            audit: audit.clone(),
            secrets,
            clock,
        }));
        let app = router(state.clone(), config.console_origin.as_deref());
        let listener = TcpListener::bind(config.bind).await?;
        let addr = listener.local_addr()?;
        let (stop, stopped) = oneshot::channel::<()>();
        let task = tokio::spawn(async move {
            axum::serve(listener, app)
                .with_graceful_shutdown(async {
                    let _ = stopped.await;
                })
                .await
        });
        tracing::info!(%addr, "listening");
        Ok(Self {
            addr,
            state,
            audit,
            stop: Some(stop),
            task: Some(task),
        })
    }

    pub fn url(&self, path: &str) -> String {
        format!("http://{}{}", self.addr, path)
    }

    pub fn audit_log(&self) -> &AuditLog {
        &self.audit
    }

    /// Resolves when the server stops serving on its own (listener error).
    pub async fn wait(&mut self) -> std::io::Result<()> {
        match self.task.as_mut() {
            Some(t) => t.await.unwrap_or_else(|e| Err(std::io::Error::other(e))),
            None => Ok(()),
        }
    }

    /// Stops accepting requests, stops every bot (persisting its state) and
    /// flushes the registry and the audit log.
    pub async fn shutdown(mut self) {
        if let Some(stop) = self.stop.take() {
            let _ = stop.send(());
        }
        if let Some(task) = self.task.take() {
            let _ = task.await;
        }
        self.state.bots.shutdown().await;
        self.audit.close();
    }
}
