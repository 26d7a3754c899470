//! `edubot-server serve` runs the API; `edubot-server keys add` mints an
//! API key into the encrypted secrets file.

use std::process::ExitCode;
use std::sync::Arc;

use clap::{Parser, Subcommand};
use edubot_core::clock::SystemClock;
use edubot_server::secrets::SecretStore;
use edubot_server::{RunningServer, ServerConfig};

#[derive(Parser)]
#[command(name = "edubot-server", version, about = "Classroom chat-bot backend")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Serve the HTTP API (configured through EDUBOT_* variables).
    Serve,
    /// Manage API keys.
    Keys {
        #[command(subcommand)]
        command: KeysCmd,
    },
}

#[derive(Subcommand)]
enum KeysCmd {
    /// Create a key and print it once.
    Add {
        #[arg(long)]
        label: String,
        /// Alphanumeric key id; generated when omitted.
        #[arg(long)]
        id: Option<String>,
    },
    /// List key ids and labels.
    List,
}

#[tokio::main]
async fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()),
        )
        .init();
    let cli = Cli::parse();
    let config = match ServerConfig::from_env() {
        Ok(c) => c,
        Err(e) => {
            eprintln!("configuration error: {e}");
            return ExitCode::from(2);
        }
    };
    match cli.command {
        Cmd::Serve => serve(config).await,
        Cmd::Keys { command } => keys(config, command),
    }
}

async fn serve(config: ServerConfig) -> ExitCode {
    let mut server = match RunningServer::start(&config, Arc::new(SystemClock)).await {
        Ok(s) => s,
        Err(e) => {
            eprintln!("cannot start: {e}");
            return ExitCode::FAILURE;
        }
    };
    tokio::select! {
        r = server.wait() => {
            if let Err(e) = r {
                eprintln!("server error: {e}");
                return ExitCode::FAILURE;
            }
        }
        _ = tokio::signal::ctrl_c() => {
            tracing::info!("shutting down");
            server.shutdown().await;
        }
    }
    ExitCode::SUCCESS
}

fn keys(config: ServerConfig, command: KeysCmd) -> ExitCode {
    let store = match SecretStore::open(&config.secrets_path, &config.passphrase, config.kdf) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("cannot open {}: {e}", config.secrets_path.display());
            return ExitCode::FAILURE;
        }
    };
    match command {
        KeysCmd::Add { label, id } => match store.add_api_key(&label, id.as_deref()) {
            Ok((key, raw)) => {
                println!("{raw}");
                eprintln!("created key {} ({}); it is shown only once", key.key_id, key.label);
                ExitCode::SUCCESS
            }
            Err(e) => {
                eprintln!("cannot add key: {e}");
                ExitCode::FAILURE
            }
        },
        KeysCmd::List => {
            for key in store.api_keys().values() {
                let state = if key.enabled { "enabled" } else { "disabled" };
                println!("{}\t{}\t{}", key.key_id, state, key.label);
            }
            ExitCode::SUCCESS
        }
    }
}
