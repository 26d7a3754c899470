use std::time::{Duration, Instant};

use edubot_simharness::{run_load, LoadProfile};

#[tokio::test(flavor = "multi_thread")]
async fn single_instructor_smoke_run_is_quick_and_clean() {
    let started = Instant::now();
    let report = run_load(&LoadProfile::new(1, 1, 3)).await.unwrap();
    assert!(started.elapsed() < Duration::from_secs(5));
    assert!(report.passed, "{}", report.render());
    assert_eq!(report.errors(), 0);
    assert_eq!(report.requests, 22);
}

#[tokio::test(flavor = "multi_thread")]
async fn same_profile_gives_the_same_request_mix() {
    let profile = LoadProfile::new(3, 20, 11);
    let a = run_load(&profile).await.unwrap();
    let b = run_load(&profile).await.unwrap();
    assert_eq!(a.requests, b.requests);
    assert_eq!(a.requests_by_route, b.requests_by_route);
    assert_eq!(a.student_events, b.student_events);
    assert_eq!(a.error_counts, b.error_counts);
    assert!(a.passed && b.passed);
}

#[tokio::test]
async fn invalid_profile_is_rejected_before_running() {
    assert!(run_load(&LoadProfile::new(0, 10, 1)).await.is_err());
    assert!(run_load(&LoadProfile::new(2, 0, 1)).await.is_err());
}

#[test]
fn report_file_is_written_and_cli_exit_codes_follow_the_result() {
    let dir = tempfile::tempdir().unwrap();
    let report = dir.path().join("load.json");
    let bin = env!("CARGO_BIN_EXE_simharness");
    let out = std::process::Command::new(bin)
        .args(["load", "--instructors", "2", "--students", "5", "--report"])
        .arg(&report)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    let json: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(json["requests"], 44);
    assert_eq!(json["passed"], true);

    let out = std::process::Command::new(bin).args(["load", "--instructors", "0"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}
