//! HTTP control surface for instructors.
//!
//! Authenticates bearer API keys, rate-limits per key, turns requests into
//! engine commands for the addressed bot and serves results and history.
//! See [`app::router`] for the routes.

pub mod app;
pub mod auth;
pub mod bots;
pub mod config;
pub mod response;
pub mod routes;
pub mod secrets;
mod server;

pub use app::{AppState, Shared};
pub use config::{ConfigError, RateLimit, ServerConfig};
pub use response::{ApiResponse, Status};
pub use server::{RunningServer, StartError};
