mod common;

use std::sync::Arc;

use common::*;
use edubot_core::domain::SessionId;
use edubot_core::engine::{replay, CommandKind, MemoryAudit, MemoryExports, QuestionSpec};
use edubot_core::domain::ResponseType;
use edubot_core::gateway::{Behavior, ScriptEntry, SimScenario};

fn lecture(seed: u64) -> SimScenario {
    let mut sc = SimScenario::new(seed, guild(30, 28));
    sc.end_ms = Some(600_000);
    sc.push(ScriptEntry::command(
        0,
        "k1",
        CommandKind::StartAttendance {
            group_id: "g1".into(),
            code: "4711".into(),
        },
    ));
    for i in 1..=30 {
        sc.push(ScriptEntry::member(1_000 + i * 50, format!("s{i}"), Behavior::dm("4711")));
    }
    sc.push(ScriptEntry::member(5_000, "s3", Behavior::dm("4711")));
    sc.push(ScriptEntry::member(5_100, "s4", Behavior::dm("0000")));
    sc.push(ScriptEntry::command(
        10_000,
        "k1",
        CommandKind::CreateSimpleSurvey {
            channel_id: "lecture".into(),
            question: "Pace?".into(),
            duration_secs: Some(120),
        },
    ));
    for i in 1..=30 {
        let lvl = 1 + (i * 7) % 5;
        sc.push(ScriptEntry::member(
            10_500 + i * 30,
            format!("s{i}"),
            Behavior::click_in(format!("level-{lvl}"), "lecture"),
        ));
    }
    sc.push(ScriptEntry::command(
        20_000,
        "k1",
        CommandKind::CreateComplexSurvey {
            channel_id: "lab".into(),
            title: "Lab".into(),
            questions: vec![
                QuestionSpec {
                    prompt: "Difficulty".into(),
                    response_type: ResponseType::FiveLevel,
                },
                QuestionSpec {
                    prompt: "Done".into(),
                    response_type: ResponseType::Percentage,
                },
            ],
            duration_secs: None,
        },
    ));
    for i in 1..=5 {
        let m = format!("s{i}");
        let base = 21_000 + i * 1_000;
        sc.push(ScriptEntry::member(base, m.clone(), Behavior::click_in("participate", "lab")));
        sc.push(ScriptEntry::member(base + 200, m.clone(), Behavior::dm("3")));
        sc.push(ScriptEntry::member(base + 400, m, Behavior::dm(format!("{}", i * 20))));
    }
    sc.push(ScriptEntry::command(
        60_000,
        "k1",
        CommandKind::StopAttendance { group_id: "g1".into() },
    ));
    sc.push(ScriptEntry::member(61_000, "s1", Behavior::dm("4711")));
    sc
}

fn run(sc: &SimScenario) -> (String, edubot_core::engine::EngineState, edubot_core::gateway::SimReport) {
    let r = replay(sc, Arc::new(MemoryAudit::default()), Arc::new(MemoryExports::default())).unwrap();
    (r.platform.event_log_jsonl(), r.engine.into_state(), r.report)
}

#[test]
fn same_seed_replays_byte_identically() {
    let sc = lecture(42);
    let (log_a, state_a, report_a) = run(&sc);
    let (log_b, state_b, report_b) = run(&sc);
    assert_eq!(log_a.as_bytes(), log_b.as_bytes());
    assert_eq!(state_a, state_b);
    assert_eq!(report_a, report_b);
    assert!(report_a.command_errors.is_empty(), "{:?}", report_a.command_errors);
    assert!(report_a.unresolved.is_empty(), "{:?}", report_a.unresolved);
}

#[test]
fn other_seed_changes_timing_but_not_outcome() {
    let (log_a, state_a, _) = run(&lecture(1));
    let (log_b, state_b, _) = run(&lecture(2));
    assert_ne!(log_a, log_b);
    let present = |s: &edubot_core::engine::EngineState| s.sessions[&SessionId::new("b1-a0001")].present_count();
    assert_eq!(present(&state_a), 28);
    assert_eq!(present(&state_b), 28);
    let counts = |s: &edubot_core::engine::EngineState| {
        s.surveys.values().map(|r| r.results().questions.iter().map(|q| q.histogram.counts()).collect::<Vec<_>>()).collect::<Vec<_>>()
    };
    assert_eq!(counts(&state_a), counts(&state_b));
}

#[test]
fn timed_survey_closes_by_end_of_scenario() {
    let (_, state, _) = run(&lecture(9));
    let simple = &state.surveys[&edubot_core::domain::SurveyId::new("b1-s0001")];
    assert_eq!(simple.definition.state, edubot_core::domain::SurveyState::Closed);
    assert_eq!(simple.responses.len(), 30);
    let complex = &state.surveys[&edubot_core::domain::SurveyId::new("b1-s0002")];
    assert_eq!(complex.responses.len(), 10);
}

#[test]
fn jsonl_form_replays_the_same() {
    let sc = lecture(5);
    let parsed = SimScenario::parse_jsonl(&sc.to_jsonl()).unwrap();
    assert_eq!(run(&sc).0, run(&parsed).0);
}
