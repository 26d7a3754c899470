//! Core of the classroom bot service.
//!
//! The crate is split along the same lines as the running system:
//!
//! - [`domain`]: value types shared by everything else (sessions, surveys,
//!   histograms, API keys, audit events). No I/O.
//! - [`gateway`]: the action/event wire model spoken between the engine and a
//!   chat platform, plus a deterministic in-process simulated platform.
//! - [`engine`]: the chat-side state machines (attendance, surveys, feedback,
//!   utility commands) and the single-writer runtime that drives them.
//! - [`persistence`]: CSV exports, the rotating audit log, the encrypted
//!   secrets file and the bot/session registry.

pub mod clock;
pub mod domain;
pub mod engine;
pub mod gateway;
pub mod persistence;

pub use chrono;
