mod common;

use std::path::{Path, PathBuf};
use std::process::Command;

use common::parse_event_log;
use edubot_core::gateway::{ChatEvent, SimScenario};
use edubot_simharness::suite::{golden_path, CaseStatus};
use edubot_simharness::{run_scenario_file, run_suite, Golden};

fn scenarios() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios")
}

fn copy(names: &[&str]) -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    for name in names {
        for file in [format!("{name}.jsonl"), format!("{name}.expected.json")] {
            std::fs::copy(scenarios().join(&file), dir.path().join(&file)).unwrap();
        }
    }
    dir
}

fn simharness(args: &[&str]) -> (i32, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_simharness")).args(args).output().unwrap();
    (out.status.code().unwrap_or(-1), String::from_utf8_lossy(&out.stdout).into_owned())
}

#[tokio::test]
async fn checked_in_scenarios_match_their_goldens() {
    let report = run_suite(&scenarios(), false).await.unwrap();
    assert_eq!(report.cases.len(), 10);
    assert!(report.passed(), "{}", report.render());
}

#[tokio::test]
async fn attendance_golden_equals_a_count_over_the_event_log() {
    let path = scenarios().join("attendance_basic.jsonl");
    let sc = SimScenario::load(&path).unwrap();
    let golden = Golden::load(&golden_path(&path)).unwrap();
    let run = run_scenario_file(&path).await.unwrap();

    let (start, stop) = (sc.at(0), sc.at(10_000));
    let roster = &sc.guild.groups[0].roster;
    let mut present = Vec::new();
    for e in parse_event_log(&run.event_log) {
        if let ChatEvent::DirectMessage { member_id, text, at } = e {
            if at >= start && at < stop && text == "1423" && roster.contains(&member_id) && !present.contains(&member_id) {
                present.push(member_id);
            }
        }
    }
    let present: Vec<String> = present.iter().map(|m| m.to_string()).collect();
    assert_eq!(present.len(), 20);
    assert_eq!(golden.summary.sessions[0].present, present);
    assert_eq!(run.result.summary.sessions[0].present, present);
}

#[tokio::test]
async fn corrupted_scenario_is_invalid_and_names_the_line() {
    let dir = copy(&["attendance_basic", "feedback"]);
    let path = dir.path().join("attendance_basic.jsonl");
    let text = std::fs::read_to_string(&path).unwrap();
    let mut lines: Vec<&str> = text.lines().collect();
    lines[2] = r#"{"at_ms":1274,"member":"s2","behavior":"teleport"}"#;
    std::fs::write(&path, lines.join("\n")).unwrap();

    let report = run_suite(dir.path(), false).await.unwrap();
    let case = &report.cases[0];
    assert_eq!(case.status, CaseStatus::Invalid);
    assert!(case.detail.as_deref().unwrap().contains("line 3"), "{:?}", case.detail);
    assert_eq!(report.cases[1].status, CaseStatus::Pass);
    assert!(!report.passed());
}

#[tokio::test]
async fn out_of_order_entry_is_reported_at_its_line() {
    let dir = copy(&["two_groups"]);
    let path = dir.path().join("two_groups.jsonl");
    let text = std::fs::read_to_string(&path).unwrap();
    let mut lines: Vec<String> = text.lines().map(str::to_owned).collect();
    lines.insert(5, r#"{"at_ms":1,"member":"s1","behavior":"dm_text","text":"2001"}"#.into());
    std::fs::write(&path, lines.join("\n")).unwrap();
    let report = run_suite(dir.path(), false).await.unwrap();
    assert_eq!(report.cases[0].status, CaseStatus::Invalid);
    assert!(report.cases[0].detail.as_deref().unwrap().contains("line 6"), "{:?}", report.cases[0].detail);
}

#[test]
fn edited_golden_fails_with_a_diff_and_exit_code_1() {
    let dir = copy(&["feedback", "simple_levels"]);
    let golden = dir.path().join("feedback.expected.json");
    let mut g = Golden::load(&golden).unwrap();
    g.summary.feedback[0].histogram[4].count += 1;
    g.save(&golden).unwrap();

    let (code, out) = simharness(&["suite", dir.path().to_str().unwrap()]);
    assert_eq!(code, 1, "{out}");
    assert!(out.lines().next().unwrap().starts_with("scenario"), "{out}");
    assert!(
        out.lines().any(|l| l.starts_with("feedback ") && l.split_whitespace().nth(1) == Some("FAIL")),
        "{out}"
    );
    assert!(out.contains("simple_levels") && out.contains("1/2 passed"), "{out}");
    assert!(out.contains(".feedback[0].histogram[4].count"), "{out}");
}

#[test]
fn missing_golden_fails_until_blessed() {
    let dir = copy(&["utilities"]);
    std::fs::remove_file(dir.path().join("utilities.expected.json")).unwrap();
    let arg = dir.path().to_str().unwrap();
    let (code, out) = simharness(&["suite", arg]);
    assert_eq!(code, 1);
    assert!(out.contains("--bless"), "{out}");
    let (code, out) = simharness(&["suite", arg, "--bless"]);
    assert_eq!(code, 0, "{out}");
    assert!(out.contains("golden written"));
    let (code, _) = simharness(&["suite", arg]);
    assert_eq!(code, 0);
    assert_eq!(
        std::fs::read_to_string(dir.path().join("utilities.expected.json")).unwrap(),
        std::fs::read_to_string(scenarios().join("utilities.expected.json")).unwrap()
    );
}

#[test]
fn directory_without_scenarios_is_a_configuration_error() {
    let dir = tempfile::tempdir().unwrap();
    let (code, _) = simharness(&["suite", dir.path().to_str().unwrap()]);
    assert_eq!(code, 2);
    let (code, _) = simharness(&["suite", "/no/such/dir"]);
    assert_eq!(code, 2);
}
