//! End-to-end load and scenario runner for the classroom bot service.
//!
//! Everything here drives the real stack: requests go over HTTP to an
//! in-process server, which hands commands to bot engines, which talk to
//! simulated chat platforms. Student behavior is injected into those
//! platforms directly.
//!
//! - [`stack`] starts a server on a temporary data directory.
//! - [`client`] is a timed HTTP client for the REST API.
//! - [`summary`] reduces a bot's final state to comparable form.
//! - [`suite`] replays scenario files against goldens.
//! - [`load`] runs concurrent instructor sessions and reports latency.

pub mod client;
pub mod load;
pub mod stack;
pub mod suite;
pub mod summary;

pub use client::{ApiClient, ClientError, Reply};
pub use load::{run_load, LoadProfile, LoadReport};
pub use stack::{Stack, StackError, StackOptions};
pub use suite::{
    run_on_stack, run_scenario, run_scenario_file, run_suite, Golden, ScenarioRun, SuiteError, SuiteReport,
};
pub use summary::Summary;
