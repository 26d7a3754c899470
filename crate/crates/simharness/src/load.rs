//! Concurrent instructor sessions against one server.
//!
//! Every instructor has an API key and a bot of their own and runs one
//! lesson: attendance, a simple survey, a three-question survey, a feedback
//! round and the utility commands, then stops the bot. That is 22 REST
//! requests, each timed over its full round trip. Students act through the
//! bot's simulated platform between requests, and every result the API
//! reports is checked against a recount of what the students were told to
//! do.
//!
//! Student choices come from a ChaCha8 stream per instructor, so request
//! counts and errors are the same for every run with the same seed; only
//! the latencies vary.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::time::{Duration, Instant};

use edubot_core::domain::{normalize_free_text, AttendanceCode, MemberId, ResponseType};
use edubot_core::gateway::{Behavior, LatencySummary, SimPlatform};
use edubot_server::AppState;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use reqwest::Method;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::client::{ApiClient, ClientError, Reply};
use crate::stack::{Stack, StackError, StackOptions};

/// Requests in one instructor's lesson.
pub const REQUESTS_PER_INSTRUCTOR: u64 = 22;

const MAX_STUDENTS: usize = 5_000;
const MAX_INSTRUCTORS: usize = 200;

const FREE_TEXT: [&str; 6] = [
    "More examples please",
    "more examples please ",
    "Slower pace",
    "all good",
    "ALL GOOD",
    "The lab was too long",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoadProfile {
    pub instructors: usize,
    pub students_per_group: usize,
    pub seed: u64,
    /// Pass mark for the 95th percentile latency.
    pub threshold_ms: f64,
    /// Time budget for the run. Lessons still going when it runs out are
    /// abandoned and counted as `timeout` errors.
    pub duration_s: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub report_path: Option<PathBuf>,
}

impl LoadProfile {
    pub fn new(instructors: usize, students_per_group: usize, seed: u64) -> Self {
        Self {
            instructors,
            students_per_group,
            seed,
            threshold_ms: 300.0,
            duration_s: 120,
            report_path: None,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(1..=MAX_INSTRUCTORS).contains(&self.instructors) {
            return Err(format!("instructors must be between 1 and {MAX_INSTRUCTORS}"));
        }
        if !(1..=MAX_STUDENTS).contains(&self.students_per_group) {
            return Err(format!("students must be between 1 and {MAX_STUDENTS}"));
        }
        if !(self.threshold_ms.is_finite() && self.threshold_ms > 0.0) {
            return Err("threshold must be a positive number of milliseconds".into());
        }
        if self.duration_s == 0 {
            return Err("duration must be at least one second".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoadReport {
    pub profile: LoadProfile,
    pub requests: u64,
    pub requests_by_route: BTreeMap<String, u64>,
    /// Student actions injected into the platforms.
    pub student_events: u64,
    pub p50_ms: f64,
    pub p95_ms: f64,
    pub max_ms: f64,
    /// Failed requests and wrong results, by kind.
    pub error_counts: BTreeMap<String, u64>,
    pub throughput_rps: f64,
    pub elapsed_ms: f64,
    pub passed: bool,
}

impl LoadReport {
    pub fn errors(&self) -> u64 {
        self.error_counts.values().sum()
    }

    pub fn render(&self) -> String {
        let mut out = format!(
            "instructors={} students={} seed={}\nrequests={} student_events={} elapsed_ms={:.0} throughput_rps={:.1}\np50_ms={:.2} p95_ms={:.2} max_ms={:.2} threshold_ms={}\n",
            self.profile.instructors,
            self.profile.students_per_group,
            self.profile.seed,
            self.requests,
            self.student_events,
            self.elapsed_ms,
            self.throughput_rps,
            self.p50_ms,
            self.p95_ms,
            self.max_ms,
            self.profile.threshold_ms,
        );
        if self.error_counts.is_empty() {
            out.push_str("errors: none\n");
        } else {
            for (k, n) in &self.error_counts {
                out.push_str(&format!("error {k}: {n}\n"));
            }
        }
        out.push_str(if self.passed { "result: PASS\n" } else { "result: FAIL\n" });
        out
    }
}

#[derive(Debug, thiserror::Error)]
pub enum LoadError {
    #[error("invalid load profile: {0}")]
    Profile(String),
    #[error(transparent)]
    Stack(#[from] StackError),
    #[error("cannot write report {path}: {source}")]
    Report { path: PathBuf, source: std::io::Error },
}

/// Starts a server, runs the profile against it and writes the report to
/// `profile.report_path` if set.
pub async fn run_load(profile: &LoadProfile) -> Result<LoadReport, LoadError> {
    profile.validate().map_err(LoadError::Profile)?;
    let stack = Stack::start(StackOptions::with_keys(profile.instructors)).await?;
    let report = run_on(&stack, profile).await;
    stack.shutdown().await;
    if let Some(path) = &profile.report_path {
        let text = serde_json::to_string_pretty(&report).expect("report serializes");
        std::fs::write(path, text + "\n").map_err(|source| LoadError::Report {
            path: path.clone(),
            source,
        })?;
    }
    Ok(report)
}

/// Runs the profile against `stack`, which needs keys `k1..kN`.
pub async fn run_on(stack: &Stack, profile: &LoadProfile) -> LoadReport {
    let started = Instant::now();
    let deadline = tokio::time::Instant::now() + Duration::from_secs(profile.duration_s);
    let mut tasks = tokio::task::JoinSet::new();
    for i in 0..profile.instructors {
        let mut flow = Flow {
            client: stack.client(&format!("k{}", i + 1)),
            state: stack.server().state.clone(),
            rng: instructor_rng(profile.seed, i),
            students: profile.students_per_group,
            name: format!("Instructor {}", i + 1),
            tally: Tally::default(),
        };
        tasks.spawn(async move {
            let finished = tokio::time::timeout_at(deadline, lesson(&mut flow)).await;
            if finished.is_err() {
                flow.tally.error("timeout");
            }
            flow.tally
        });
    }
    let mut total = Tally::default();
    while let Some(done) = tasks.join_next().await {
        match done {
            Ok(t) => total.merge(t),
            Err(_) => total.error("panic"),
        }
    }
    let elapsed = started.elapsed().as_secs_f64();
    let latency = LatencySummary::from_samples(&total.samples);
    let requests = total.by_route.values().sum();
    let passed = total.errors.is_empty() && latency.p95_ms <= profile.threshold_ms;
    LoadReport {
        profile: profile.clone(),
        requests,
        requests_by_route: total.by_route,
        student_events: total.student_events,
        p50_ms: latency.p50_ms,
        p95_ms: latency.p95_ms,
        max_ms: latency.max_ms,
        error_counts: total.errors,
        throughput_rps: if elapsed > 0.0 { requests as f64 / elapsed } else { 0.0 },
        elapsed_ms: elapsed * 1e3,
        passed,
    }
}

fn instructor_rng(seed: u64, instructor: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(instructor as u64);
    rng
}

#[derive(Debug, Default)]
struct Tally {
    samples: Vec<f64>,
    by_route: BTreeMap<String, u64>,
    errors: BTreeMap<String, u64>,
    student_events: u64,
}

impl Tally {
    fn error(&mut self, kind: impl Into<String>) {
        *self.errors.entry(kind.into()).or_default() += 1;
    }

    fn merge(&mut self, other: Tally) {
        self.samples.extend(other.samples);
        for (k, n) in other.by_route {
            *self.by_route.entry(k).or_default() += n;
        }
        for (k, n) in other.errors {
            *self.errors.entry(k).or_default() += n;
        }
        self.student_events += other.student_events;
    }
}

struct Flow {
    client: ApiClient,
    state: AppState,
    rng: ChaCha8Rng,
    students: usize,
    name: String,
    tally: Tally,
}

impl Flow {
    /// Sends one request. `None` (with the error counted) unless it
    /// succeeded.
    async fn call(&mut self, route: &str, method: Method, path: &str, body: Option<Value>) -> Option<Reply> {
        *self.tally.by_route.entry(route.to_owned()).or_default() += 1;
        match self.client.send(method, path, body.as_ref()).await {
            Ok(r) => {
                self.tally.samples.push(r.latency_ms);
                if r.is_success() {
                    Some(r)
                } else {
                    self.tally.error(format!("{route} -> {}", r.status.as_u16()));
                    None
                }
            }
            Err(ClientError::Connect { .. }) => {
                self.tally.error("connect");
                None
            }
            Err(_) => {
                self.tally.error(format!("{route} -> transport"));
                None
            }
        }
    }

    fn check(&mut self, what: &str, ok: bool) {
        if !ok {
            self.tally.error(format!("wrong result: {what}"));
        }
    }

    fn act(&mut self, platform: &SimPlatform, member: &str, behavior: Behavior) {
        self.tally.student_events += 1;
        if platform.inject(&MemberId::new(member), &behavior).is_err() {
            self.tally.error("student action failed");
        }
    }

    fn chance(&mut self, p: f64) -> bool {
        self.rng.random_bool(p)
    }
}

fn id_field(r: &Reply, key: &str) -> Option<String> {
    r.data()[key].as_str().map(str::to_owned)
}

fn counts(histogram: &Value) -> Vec<u64> {
    histogram["buckets"]
        .as_array()
        .map(|b| b.iter().map(|x| x["count"].as_u64().unwrap_or_default()).collect())
        .unwrap_or_default()
}

fn labelled(histogram: &Value) -> BTreeMap<String, u64> {
    histogram["buckets"]
        .as_array()
        .map(|b| {
            b.iter()
                .map(|x| {
                    let label = x["label"].as_str().unwrap_or_default().to_owned();
                    (label, x["count"].as_u64().unwrap_or_default())
                })
                .collect()
        })
        .unwrap_or_default()
}

/// One instructor's lesson. Returns early (`None`) once a request the rest
/// depends on has failed.
async fn lesson(f: &mut Flow) -> Option<()> {
    let students: Vec<String> = (1..=f.students).map(|i| format!("s{i}")).collect();

    let body = json!({ "name": f.name, "students": f.students, "seed": f.rng.random::<u32>() });
    let r = f.call("POST /api/bots", Method::POST, "/api/bots", Some(body)).await?;
    let bot = id_field(&r, "bot_id")?;
    f.call("POST /api/bots/{id}/start", Method::POST, &format!("/api/bots/{bot}/start"), None)
        .await?;
    let Some(platform) = f.state.bots.platform(&bot.as_str().into()) else {
        f.tally.error("started bot has no platform");
        return None;
    };
    let r = f.call("GET /api/health", Method::GET, &format!("/api/health?bot={bot}"), None).await?;
    let total = r.data()["presence"]["total"].as_u64();
    f.check("presence total", total == Some(f.students as u64));

    // Attendance: most students check in, a few mistype the code first or
    // send it twice, and some only turn up after the session has closed.
    let code = AttendanceCode::random(&mut f.rng).as_str().to_owned();
    let wrong = format!("{:04}", (code.parse::<u32>().unwrap_or(0) + 1) % 10_000);
    let r = f
        .call(
            "POST /api/attendance",
            Method::POST,
            &format!("/api/attendance?code={code}&group=g1&status=start&bot={bot}"),
            None,
        )
        .await?;
    let session = id_field(&r, "session_id")?;
    let mut present = 0u64;
    let mut late = Vec::new();
    for s in &students {
        if f.chance(0.9) {
            if f.chance(0.1) {
                f.act(&platform, s, Behavior::dm(wrong.clone()));
            }
            f.act(&platform, s, Behavior::dm(code.clone()));
            if f.chance(0.1) {
                f.act(&platform, s, Behavior::dm(code.clone()));
            }
            present += 1;
        } else if f.chance(0.3) {
            late.push(s.clone());
        }
    }
    let r = f
        .call(
            "GET /api/attendance/sessions/{id}",
            Method::GET,
            &format!("/api/attendance/sessions/{session}"),
            None,
        )
        .await?;
    f.check("live present count", r.data()["present_count"].as_u64() == Some(present));
    f.call(
        "POST /api/attendance",
        Method::POST,
        &format!("/api/attendance?group=g1&status=stop&bot={bot}"),
        None,
    )
    .await?;
    for s in &late {
        f.act(&platform, s, Behavior::dm(code.clone()));
    }
    let r = f
        .call(
            "GET /api/attendance/sessions",
            Method::GET,
            &format!("/api/attendance/sessions?bot={bot}"),
            None,
        )
        .await?;
    let listed = &r.data()["sessions"][0];
    f.check(
        "closed session count",
        listed["present_count"].as_u64() == Some(present) && listed["state"] == "closed",
    );

    // Simple survey: one click per student, some change their mind.
    let r = f
        .call(
            "POST /api/surveys/simple",
            Method::POST,
            "/api/surveys/simple",
            Some(json!({ "channel_id": "lecture", "question": "How difficult was today's lecture?", "bot_id": bot })),
        )
        .await?;
    let simple = id_field(&r, "survey_id")?;
    let mut last_level: BTreeMap<&str, usize> = BTreeMap::new();
    for s in &students {
        if f.chance(0.8) {
            let mut level = f.rng.random_range(1..=5);
            f.act(&platform, s, Behavior::click_in(format!("level-{level}"), "lecture"));
            if f.chance(0.15) {
                level = f.rng.random_range(1..=5);
                f.act(&platform, s, Behavior::click_in(format!("level-{level}"), "lecture"));
            }
            last_level.insert(s.as_str(), level);
        }
    }
    let mut expected = vec![0u64; 5];
    for level in last_level.values() {
        expected[level - 1] += 1;
    }
    let r = f
        .call(
            "GET /api/surveys/{id}/results",
            Method::GET,
            &format!("/api/surveys/{simple}/results"),
            None,
        )
        .await?;
    f.check("simple survey histogram", counts(&r.data()["questions"][0]["histogram"]) == expected);
    f.call(
        "POST /api/surveys/{id}/close",
        Method::POST,
        &format!("/api/surveys/{simple}/close"),
        None,
    )
    .await?;

    // Three-question survey answered in direct messages; some participants
    // stop part-way.
    let types = [ResponseType::FiveLevel, ResponseType::Percentage, ResponseType::FreeText];
    let questions: Vec<Value> = types
        .iter()
        .enumerate()
        .map(|(i, t)| json!({ "prompt": format!("Question {}", i + 1), "response_type": t }))
        .collect();
    let r = f
        .call(
            "POST /api/surveys/complex",
            Method::POST,
            "/api/surveys/complex",
            Some(json!({ "channel_id": "lecture", "title": "Lab review", "questions": questions, "bot_id": bot })),
        )
        .await?;
    let complex = id_field(&r, "survey_id")?;
    let mut levels = vec![0u64; 5];
    let mut deciles = vec![0u64; 10];
    let mut texts: BTreeMap<String, u64> = BTreeMap::new();
    let mut respondents = 0u64;
    for s in &students {
        if !f.chance(0.5) {
            continue;
        }
        let answered = if f.chance(0.2) { f.rng.random_range(1..=2) } else { 3 };
        respondents += 1;
        f.act(&platform, s, Behavior::click_in("participate", "lecture"));
        let level: usize = f.rng.random_range(1..=5);
        f.act(&platform, s, Behavior::dm(level.to_string()));
        levels[level - 1] += 1;
        if answered >= 2 {
            let pct: usize = f.rng.random_range(0..=100);
            f.act(&platform, s, Behavior::dm(format!("{pct}%")));
            deciles[(pct / 10).min(9)] += 1;
        }
        if answered == 3 {
            let text = FREE_TEXT[f.rng.random_range(0..FREE_TEXT.len())];
            f.act(&platform, s, Behavior::dm(text));
            *texts.entry(normalize_free_text(text)).or_default() += 1;
        }
    }
    let r = f
        .call(
            "GET /api/surveys/{id}/results",
            Method::GET,
            &format!("/api/surveys/{complex}/results"),
            None,
        )
        .await?;
    let d = r.data();
    f.check("complex survey respondents", d["respondents"].as_u64() == Some(respondents));
    f.check("complex survey levels", counts(&d["questions"][0]["histogram"]) == levels);
    f.check("complex survey percentages", counts(&d["questions"][1]["histogram"]) == deciles);
    f.check("complex survey free text", labelled(&d["questions"][2]["histogram"]) == texts);
    f.call(
        "POST /api/surveys/{id}/close",
        Method::POST,
        &format!("/api/surveys/{complex}/close"),
        None,
    )
    .await?;

    // Feedback round: the last rating of each student counts.
    let r = f
        .call(
            "POST /api/feedback",
            Method::POST,
            "/api/feedback",
            Some(json!({ "channel_id": "lecture", "label": "Today's session", "bot_id": bot })),
        )
        .await?;
    let feedback = id_field(&r, "feedback_id")?;
    let mut ratings: BTreeMap<&str, usize> = BTreeMap::new();
    for s in &students {
        if f.chance(0.7) {
            let rating = f.rng.random_range(1..=5);
            f.act(&platform, s, Behavior::click_in(format!("rate-{rating}"), "lecture"));
            ratings.insert(s.as_str(), rating);
        }
    }
    let mut expected = vec![0u64; 5];
    for rating in ratings.values() {
        expected[rating - 1] += 1;
    }
    let r = f
        .call(
            "GET /api/feedback/{id}/results",
            Method::GET,
            &format!("/api/feedback/{feedback}/results"),
            None,
        )
        .await?;
    f.check("feedback histogram", counts(&r.data()["histogram"]) == expected);
    f.call(
        "POST /api/feedback/{id}/close",
        Method::POST,
        &format!("/api/feedback/{feedback}/close"),
        None,
    )
    .await?;

    // Utility commands.
    f.call("POST /api/commands/ping", Method::POST, "/api/commands/ping", Some(json!({ "bot_id": bot })))
        .await?;
    let member = students[f.rng.random_range(0..students.len())].clone();
    f.call(
        "POST /api/commands/send-message",
        Method::POST,
        "/api/commands/send-message",
        Some(json!({ "member_id": member, "text": "See you next week", "bot_id": bot })),
    )
    .await?;
    f.call(
        "POST /api/commands/give-role",
        Method::POST,
        "/api/commands/give-role",
        Some(json!({ "member_id": member, "role_id": "tutor", "bot_id": bot })),
    )
    .await?;
    f.call(
        "POST /api/commands/clear-messages",
        Method::POST,
        "/api/commands/clear-messages",
        Some(json!({ "channel_id": "lab", "count": 5, "bot_id": bot })),
    )
    .await?;
    let r = f.call("GET /api/surveys", Method::GET, &format!("/api/surveys?bot={bot}"), None).await?;
    let closed = r.data()["surveys"]
        .as_array()
        .is_some_and(|s| s.len() == 2 && s.iter().all(|x| x["state"] == "closed"));
    f.check("survey list", closed);
    f.call("POST /api/bots/{id}/stop", Method::POST, &format!("/api/bots/{bot}/stop"), None)
        .await?;
    Some(())
}
