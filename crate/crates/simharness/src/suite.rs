//! Scenario files replayed through the full stack and checked against
//! golden files.
//!
//! A suite directory holds `name.jsonl` scenarios next to
//! `name.expected.json` goldens. A golden is produced by replaying the
//! scenario on a bare engine (`--bless`); a suite run replays it through
//! HTTP, the server and a live engine thread instead and compares what the
//! REST API reports.
//!
//! The full-stack run is deterministic: server and platform share a manual
//! clock that is set to each entry's time, a sweep is queued before every
//! entry, and every entry is fully handled before the next one starts.

use std::fmt::Write as _;
use std::io;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use edubot_core::clock::ManualClock;
use edubot_core::domain::BotId;
use edubot_core::engine::{replay, CommandKind, MemoryExports, NullAudit};
use edubot_core::gateway::{Delivery, ScenarioCursor, ScenarioError, SimScenario};
use edubot_core::persistence::BotRecord;
use edubot_server::RateLimit;
use reqwest::{Method, Url};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::client::ClientError;
use crate::stack::{Stack, StackError, StackOptions};
use crate::summary::Summary;

pub const SCENARIO_SUFFIX: &str = ".jsonl";
pub const GOLDEN_SUFFIX: &str = ".expected.json";

#[derive(Debug, thiserror::Error)]
pub enum SuiteError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Stack(#[from] StackError),
    #[error(transparent)]
    Client(#[from] ClientError),
    #[error("cannot use {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{0}")]
    Setup(String),
}

/// Expected final state of a scenario.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Golden {
    pub summary: Summary,
    /// Script entries (0-based) whose instructor command was rejected.
    pub rejected_commands: Vec<usize>,
    /// Script entries whose member behavior produced no event.
    pub unresolved: Vec<usize>,
}

impl Golden {
    /// Replays `scenario` on a bare engine, with no server in between.
    pub fn replay(scenario: &SimScenario) -> Result<Self, ScenarioError> {
        let r = replay(scenario, Arc::new(NullAudit), Arc::new(MemoryExports::default()))?;
        Ok(Self {
            summary: Summary::from_state(r.engine.state()),
            rejected_commands: r.report.command_errors.iter().map(|e| e.index).collect(),
            unresolved: r.report.unresolved.iter().map(|e| e.index).collect(),
        })
    }

    pub fn load(path: &Path) -> Result<Self, SuiteError> {
        let text = std::fs::read_to_string(path).map_err(|source| SuiteError::Io {
            path: path.to_owned(),
            source,
        })?;
        serde_json::from_str(&text).map_err(|e| SuiteError::Io {
            path: path.to_owned(),
            source: io::Error::new(io::ErrorKind::InvalidData, e),
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), SuiteError> {
        let mut text = serde_json::to_string_pretty(self).expect("golden serializes");
        text.push('\n');
        std::fs::write(path, text).map_err(|source| SuiteError::Io {
            path: path.to_owned(),
            source,
        })
    }

    /// Differences from `self` to `actual`, one per line.
    pub fn diff(&self, actual: &Golden) -> Vec<String> {
        let mut out = self.summary.diff(&actual.summary);
        if self.rejected_commands != actual.rejected_commands {
            out.push(format!(
                "rejected_commands: expected {:?}, found {:?}",
                self.rejected_commands, actual.rejected_commands
            ));
        }
        if self.unresolved != actual.unresolved {
            out.push(format!(
                "unresolved: expected {:?}, found {:?}",
                self.unresolved, actual.unresolved
            ));
        }
        out
    }
}

/// Result of one full-stack scenario run.
#[derive(Debug, Clone)]
pub struct ScenarioRun {
    pub bot_id: BotId,
    pub result: Golden,
    /// The platform's event stream as JSON Lines.
    pub event_log: String,
    /// The bot's registry entry after it was stopped.
    pub record: BotRecord,
    pub events: usize,
    pub commands: usize,
}

/// Method, path with query, and body of the REST request for a command.
pub fn request_for(bot: &str, kind: &CommandKind) -> (Method, String, Option<Value>) {
    let post = |path: String, body: Value| (Method::POST, path, Some(body));
    match kind {
        CommandKind::StartAttendance { group_id, code } => (
            Method::POST,
            with_query(
                "/api/attendance",
                &[("code", code), ("group", group_id.as_str()), ("status", "start"), ("bot", bot)],
            ),
            None,
        ),
        CommandKind::StopAttendance { group_id } => (
            Method::POST,
            with_query("/api/attendance", &[("group", group_id.as_str()), ("status", "stop"), ("bot", bot)]),
            None,
        ),
        CommandKind::CreateSimpleSurvey {
            channel_id,
            question,
            duration_secs,
        } => post(
            "/api/surveys/simple".into(),
            json!({ "channel_id": channel_id, "question": question, "duration": duration_secs, "bot_id": bot }),
        ),
        CommandKind::CreateComplexSurvey {
            channel_id,
            title,
            questions,
            duration_secs,
        } => post(
            "/api/surveys/complex".into(),
            json!({
                "channel_id": channel_id,
                "title": title,
                "questions": questions,
                "duration": duration_secs,
                "bot_id": bot,
            }),
        ),
        CommandKind::CloseSurvey { survey_id } => {
            (Method::POST, format!("/api/surveys/{}/close", encode(survey_id.as_str())), None)
        }
        CommandKind::StartFeedback { channel_id, label } => post(
            "/api/feedback".into(),
            json!({ "channel_id": channel_id, "label": label, "bot_id": bot }),
        ),
        CommandKind::CloseFeedback { feedback_id } => {
            (Method::POST, format!("/api/feedback/{}/close", encode(feedback_id.as_str())), None)
        }
        CommandKind::Ping => post("/api/commands/ping".into(), json!({ "bot_id": bot })),
        CommandKind::SendGreeting { member_id, text } => post(
            "/api/commands/send-message".into(),
            json!({ "member_id": member_id, "text": text, "bot_id": bot }),
        ),
        CommandKind::GiveRole { member_id, role_id } => post(
            "/api/commands/give-role".into(),
            json!({ "member_id": member_id, "role_id": role_id, "bot_id": bot }),
        ),
        CommandKind::ClearMessages { channel_id, count } => post(
            "/api/commands/clear-messages".into(),
            json!({ "channel_id": channel_id, "count": count, "bot_id": bot }),
        ),
    }
}

fn with_query(path: &str, pairs: &[(&str, &str)]) -> String {
    let mut url = Url::parse("http://localhost").expect("valid base");
    url.set_path(path);
    url.query_pairs_mut().extend_pairs(pairs);
    format!("{}?{}", url.path(), url.query().unwrap_or_default())
}

fn encode(segment: &str) -> String {
    let mut url = Url::parse("http://localhost").expect("valid base");
    url.path_segments_mut().expect("base has a path").pop_if_empty().push(segment);
    url.path().trim_start_matches('/').to_owned()
}

/// Plays `scenario` through `stack`, which must run on a manual clock and
/// must not have created any bot yet (the scenario's ids assume a fresh
/// server). Commands are sent with the key named by the entry's actor when
/// one exists, else with `k1`.
pub async fn run_on_stack(stack: &Stack, scenario: &SimScenario) -> Result<ScenarioRun, SuiteError> {
    scenario.validate()?;
    let clock = stack
        .manual_clock()
        .ok_or_else(|| SuiteError::Setup("scenario runs need a stack on a manual clock".into()))?
        .clone();
    clock.set(scenario.epoch);
    let admin = stack.client("k1");
    let created = admin
        .post(
            "/api/bots",
            &json!({
                "name": format!("scenario {}", scenario.seed),
                "guild": scenario.guild,
                "seed": scenario.seed,
                "latency_jitter_ms": scenario.latency_jitter_ms,
            }),
        )
        .await?;
    let bot = BotId::new(created.data()["bot_id"].as_str().unwrap_or_default());
    if bot != scenario.bot_id {
        return Err(SuiteError::Setup(format!(
            "the server assigned bot id {bot} but the scenario is written for {}",
            scenario.bot_id
        )));
    }
    admin.post(&format!("/api/bots/{bot}/start"), &json!({})).await?;
    let rt = stack
        .bots()
        .runtime(&bot)
        .ok_or_else(|| SuiteError::Setup(format!("bot {bot} did not start")))?;

    let mut result = Golden {
        summary: Summary::default(),
        rejected_commands: Vec::new(),
        unresolved: Vec::new(),
    };
    let (mut events, mut commands) = (0, 0);
    let mut last = scenario.epoch;
    let mut cursor = ScenarioCursor::new(scenario);
    loop {
        let mut tick = None;
        let delivery = cursor.next_delivery_with(|member, behavior, at| {
            clock.set(at);
            tick = Some(rt.handle.tick());
            rt.platform.inject_at(member, behavior, at)
        });
        let Some(delivery) = delivery else { break };
        last = delivery.at();
        if let Some(t) = tick {
            t.await.map_err(|e| SuiteError::Setup(format!("engine sweep failed: {e}")))?;
        }
        match delivery {
            Delivery::Event { .. } => {
                events += 1;
                if !stack.bots().sync(&bot).await {
                    return Err(SuiteError::Setup(format!("bot {bot} stopped during the scenario")));
                }
            }
            Delivery::Unresolved { index, .. } => result.unresolved.push(index),
            Delivery::Command {
                index,
                at,
                actor,
                command,
            } => {
                commands += 1;
                clock.set(at);
                rt.handle
                    .tick()
                    .await
                    .map_err(|e| SuiteError::Setup(format!("engine sweep failed: {e}")))?;
                let client = if stack.raw_key(&actor).is_some() {
                    stack.client(&actor)
                } else {
                    admin.clone()
                };
                let (method, path, body) = request_for(bot.as_str(), &command);
                let reply = client.send(method, &path, body.as_ref()).await?;
                if !reply.is_success() {
                    result.rejected_commands.push(index);
                }
            }
        }
    }
    if let Some(end) = scenario.end_ms {
        clock.set(scenario.at(end).max(last));
        rt.handle
            .tick()
            .await
            .map_err(|e| SuiteError::Setup(format!("engine sweep failed: {e}")))?;
    }
    result.summary = Summary::fetch(&admin, bot.as_str()).await?;
    let event_log = rt.platform.event_log_jsonl();
    drop(rt);
    admin.post(&format!("/api/bots/{bot}/stop"), &json!({})).await?;
    stack.flush();
    let record = stack
        .bots()
        .record(&bot)
        .ok_or_else(|| SuiteError::Setup(format!("bot {bot} vanished from the registry")))?;
    Ok(ScenarioRun {
        bot_id: bot,
        result,
        event_log,
        record,
        events,
        commands,
    })
}

/// Starts a fresh stack for `scenario`, plays it and shuts the stack down.
pub async fn run_scenario(scenario: &SimScenario) -> Result<ScenarioRun, SuiteError> {
    let stack = Stack::start(StackOptions {
        rate_limit: RateLimit {
            max_requests: usize::MAX,
            ..RateLimit::default()
        },
        clock: Some(Arc::new(ManualClock::new(scenario.epoch))),
        ..StackOptions::default()
    })
    .await?;
    let run = run_on_stack(&stack, scenario).await;
    stack.shutdown().await;
    run
}

pub async fn run_scenario_file(path: &Path) -> Result<ScenarioRun, SuiteError> {
    run_scenario(&SimScenario::load(path)?).await
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CaseStatus {
    Pass,
    Fail,
    /// The scenario file did not parse or validate.
    Invalid,
    /// The run itself broke down.
    Error,
}

impl CaseStatus {
    pub fn label(self) -> &'static str {
        match self {
            CaseStatus::Pass => "PASS",
            CaseStatus::Fail => "FAIL",
            CaseStatus::Invalid => "INVALID",
            CaseStatus::Error => "ERROR",
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CaseResult {
    pub name: String,
    pub status: CaseStatus,
    pub events: usize,
    pub commands: usize,
    pub elapsed_ms: u128,
    /// Whether the golden was (re)written by this run.
    pub blessed: bool,
    /// Validation or run error, if any.
    pub detail: Option<String>,
    pub diffs: Vec<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SuiteReport {
    pub cases: Vec<CaseResult>,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.cases.iter().all(|c| c.status == CaseStatus::Pass)
    }

    /// Summary table followed by the details of every case that did not
    /// pass.
    pub fn render(&self) -> String {
        let width = self.cases.iter().map(|c| c.name.len()).max().unwrap_or(0).max(8);
        let mut out = String::new();
        let _ = writeln!(out, "{:<width$}  {:<7}  {:>6}  {:>8}  {:>8}", "scenario", "result", "events", "commands", "time_ms");
        for c in &self.cases {
            let _ = writeln!(
                out,
                "{:<width$}  {:<7}  {:>6}  {:>8}  {:>8}{}",
                c.name,
                c.status.label(),
                c.events,
                c.commands,
                c.elapsed_ms,
                if c.blessed { "  (golden written)" } else { "" }
            );
        }
        let passed = self.cases.iter().filter(|c| c.status == CaseStatus::Pass).count();
        let _ = writeln!(out, "{passed}/{} passed", self.cases.len());
        for c in self.cases.iter().filter(|c| c.status != CaseStatus::Pass) {
            let _ = writeln!(out, "\n{} ({}):", c.name, c.status.label());
            if let Some(d) = &c.detail {
                let _ = writeln!(out, "  {d}");
            }
            for d in &c.diffs {
                let _ = writeln!(out, "  {d}");
            }
        }
        out
    }
}

/// Scenario files in `dir`, sorted by name.
pub fn scenario_files(dir: &Path) -> Result<Vec<PathBuf>, SuiteError> {
    let io_err = |source| SuiteError::Io {
        path: dir.to_owned(),
        source,
    };
    let mut files = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(io_err)? {
        let path = entry.map_err(io_err)?.path();
        if path.is_file() && path.to_string_lossy().ends_with(SCENARIO_SUFFIX) {
            files.push(path);
        }
    }
    files.sort();
    if files.is_empty() {
        return Err(SuiteError::Setup(format!("no *{SCENARIO_SUFFIX} scenarios in {}", dir.display())));
    }
    Ok(files)
}

pub fn golden_path(scenario: &Path) -> PathBuf {
    let name = scenario.to_string_lossy();
    PathBuf::from(format!("{}{GOLDEN_SUFFIX}", name.trim_end_matches(SCENARIO_SUFFIX)))
}

/// Runs every scenario in `dir`. With `bless`, goldens are first rewritten
/// from a bare-engine replay. Errors are reserved for an unusable directory;
/// problems with single scenarios are reported per case.
pub async fn run_suite(dir: &Path, bless: bool) -> Result<SuiteReport, SuiteError> {
    let mut cases = Vec::new();
    for path in scenario_files(dir)? {
        let started = Instant::now();
        let name = path
            .file_name()
            .map(|n| n.to_string_lossy().trim_end_matches(SCENARIO_SUFFIX).to_owned())
            .unwrap_or_default();
        let mut case = CaseResult {
            name,
            status: CaseStatus::Error,
            events: 0,
            commands: 0,
            elapsed_ms: 0,
            blessed: false,
            detail: None,
            diffs: Vec::new(),
        };
        run_case(&path, bless, &mut case).await;
        case.elapsed_ms = started.elapsed().as_millis();
        cases.push(case);
    }
    Ok(SuiteReport { cases })
}

async fn run_case(path: &Path, bless: bool, case: &mut CaseResult) {
    let scenario = match SimScenario::load(path) {
        Ok(s) => s,
        Err(e) => {
            case.status = CaseStatus::Invalid;
            case.detail = Some(format!("{}: {e}", path.display()));
            return;
        }
    };
    let golden_file = golden_path(path);
    let golden = if bless {
        let g = match Golden::replay(&scenario) {
            Ok(g) => g,
            Err(e) => return fail(case, CaseStatus::Error, format!("replay failed: {e}")),
        };
        if let Err(e) = g.save(&golden_file) {
            return fail(case, CaseStatus::Error, e.to_string());
        }
        case.blessed = true;
        g
    } else {
        match Golden::load(&golden_file) {
            Ok(g) => g,
            Err(e) => return fail(case, CaseStatus::Fail, format!("{e} (run with --bless to create it)")),
        }
    };
    match run_scenario(&scenario).await {
        Ok(run) => {
            case.events = run.events;
            case.commands = run.commands;
            case.diffs = golden.diff(&run.result);
            case.status = if case.diffs.is_empty() {
                CaseStatus::Pass
            } else {
                CaseStatus::Fail
            };
        }
        Err(e) => fail(case, CaseStatus::Error, e.to_string()),
    }
}

fn fail(case: &mut CaseResult, status: CaseStatus, detail: String) {
    case.status = status;
    case.detail = Some(detail);
}
