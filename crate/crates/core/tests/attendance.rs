mod common;

use std::collections::BTreeSet;

use common::*;
use edubot_core::domain::{MemberId, SessionId, SessionState};
use edubot_core::engine::{CommandKind, EngineError};
use edubot_core::gateway::ChatAction;
use proptest::prelude::*;

#[test]
fn start_reports_success_and_posts_prompt_without_code() {
    let mut f = Fixture::new(5, 5);
    let r = f.start("g1", "1423", secs(0));
    assert!(r.message.starts_with("Attendance command executed"), "{}", r.message);
    let data = r.data.unwrap();
    assert_eq!(data["session_id"], "b1-a0001");
    assert_eq!(data["code"], "1423");
    let posted = f.platform.channel_messages(&"lecture".into());
    assert_eq!(posted.len(), 1);
    assert!(!posted[0].text.contains("1423"));
}

#[test]
fn second_start_for_same_group_conflicts() {
    let mut f = Fixture::new(5, 5);
    f.start("g1", "1423", secs(0));
    let err = f
        .run(
            CommandKind::StartAttendance {
                group_id: "g1".into(),
                code: "9999".into(),
            },
            secs(1),
        )
        .unwrap_err();
    assert!(matches!(err, EngineError::Conflict(_)));
    // other groups are independent
    f.start("g2", "9999", secs(2));
}

#[test]
fn invalid_code_and_unknown_group_are_rejected() {
    let mut f = Fixture::new(5, 5);
    for code in ["12", "12345", "12a4", ""] {
        let err = f
            .run(
                CommandKind::StartAttendance {
                    group_id: "g1".into(),
                    code: code.into(),
                },
                secs(0),
            )
            .unwrap_err();
        assert!(matches!(err, EngineError::InvalidInput(_)), "{code}: {err:?}");
    }
    let err = f
        .run(
            CommandKind::StartAttendance {
                group_id: "nope".into(),
                code: "1423".into(),
            },
            secs(0),
        )
        .unwrap_err();
    assert!(matches!(err, EngineError::NotFound(_)));
    assert!(f.engine.state().sessions.is_empty());
}

#[test]
fn dm_check_in_is_idempotent() {
    let mut f = Fixture::new(5, 5);
    f.start("g1", "1423", secs(0));
    let first = f.dm("s1", "1423", secs(3));
    assert_eq!(first.len(), 1);
    assert!(matches!(&first[0], ChatAction::SendDm { member_id, .. } if member_id.as_str() == "s1"));
    assert!(f.last_dm_text("s1").contains("checked in"));
    let second = f.dm("s1", " 1423 ", secs(4));
    assert_eq!(second.len(), 1);
    assert!(f.last_dm_text("s1").contains("already checked in"));
    let s = f.engine.session(&SessionId::new("b1-a0001")).unwrap();
    assert_eq!(s.present_count(), 1);
    assert_eq!(s.checkins[0].display_name, "Student 1");
}

#[test]
fn wrong_code_non_roster_and_chatter_get_polite_replies() {
    let mut f = Fixture::new(5, 3);
    f.start("g1", "1423", secs(0));
    f.dm("s1", "1424", secs(1));
    assert!(f.last_dm_text("s1").contains("not correct"));
    f.dm("s5", "1423", secs(2));
    assert!(f.last_dm_text("s5").contains("not on the roster"));
    f.dm("s2", "hello?", secs(3));
    assert!(f.last_dm_text("s2").contains("4-digit"));
    let s = f.engine.session(&SessionId::new("b1-a0001")).unwrap();
    assert_eq!(s.present_count(), 0);
}

#[test]
fn stop_without_session_names_group_and_changes_nothing() {
    let mut f = Fixture::new(5, 5);
    let before = f.engine.state().clone();
    let err = f
        .run(CommandKind::StopAttendance { group_id: "g1".into() }, secs(0))
        .unwrap_err();
    match err {
        EngineError::NotFound(m) => assert!(m.contains("g1"), "{m}"),
        other => panic!("{other:?}"),
    }
    assert_eq!(f.engine.state(), &before);
}

#[test]
fn close_reports_summary_exports_and_rejects_late_dms() {
    let mut f = Fixture::new(5, 5);
    f.start("g1", "1423", secs(0));
    f.dm("s1", "1423", secs(1));
    f.dm("s2", "1423", secs(2));
    let r = f
        .run(CommandKind::StopAttendance { group_id: "g1".into() }, secs(10))
        .unwrap();
    let data = r.data.unwrap();
    assert_eq!(data["present_count"], 2);
    assert_eq!(data["roster_size"], 5);
    assert_eq!(f.exports.attendance().len(), 1);
    assert_eq!(f.exports.attendance()[0].state, SessionState::Closed);

    let late = f.dm("s3", "1423", secs(11));
    assert_eq!(late.len(), 1, "one rejection DM");
    assert!(f.last_dm_text("s3").contains("no open attendance"));
    let s = f.engine.session(&SessionId::new("b1-a0001")).unwrap();
    assert_eq!(s.present_count(), 2);
    assert_eq!(s.state, SessionState::Closed);
}

#[test]
fn close_immediately_after_open_has_nobody_present() {
    let mut f = Fixture::new(5, 5);
    f.start("g1", "1423", secs(0));
    let r = f
        .run(CommandKind::StopAttendance { group_id: "g1".into() }, secs(0))
        .unwrap();
    assert_eq!(r.data.unwrap()["present_count"], 0);
}

#[test]
fn failed_export_keeps_session_open_and_retry_succeeds() {
    let mut f = Fixture::new(5, 5);
    f.start("g1", "1423", secs(0));
    f.dm("s1", "1423", secs(1));
    f.exports.set_failing(true);
    let err = f
        .run(CommandKind::StopAttendance { group_id: "g1".into() }, secs(5))
        .unwrap_err();
    assert!(matches!(err, EngineError::Internal(_)));
    assert!(f.engine.state().open_session_for(&"g1".into()).is_some());
    f.exports.set_failing(false);
    f.run(CommandKind::StopAttendance { group_id: "g1".into() }, secs(6))
        .unwrap();
    assert!(f.engine.state().open_session_for(&"g1".into()).is_none());
}

#[test]
fn platform_outage_fails_start_without_state_change() {
    let mut f = Fixture::new(5, 5);
    f.platform.set_available(false);
    let err = f
        .run(
            CommandKind::StartAttendance {
                group_id: "g1".into(),
                code: "1423".into(),
            },
            secs(0),
        )
        .unwrap_err();
    assert!(matches!(err, EngineError::Unavailable(_)));
    assert!(f.engine.state().sessions.is_empty());
    assert_eq!(f.engine.state().counters.attendance, 0);
}

#[test]
fn every_command_is_audited_once_with_admin_context() {
    let mut f = Fixture::new(5, 5);
    f.start("g1", "1423", secs(0));
    let _ = f.run(
        CommandKind::StartAttendance {
            group_id: "g1".into(),
            code: "1423".into(),
        },
        secs(1),
    );
    let cmds: Vec<_> = f
        .audit
        .events()
        .into_iter()
        .filter(|e| e.action == "attendance.start")
        .collect();
    assert_eq!(cmds.len(), 2);
    assert!(cmds.iter().all(|e| e.actor == "k1" && e.params["as_role"] == "admin"));
    assert_eq!(cmds[0].outcome, edubot_core::domain::Outcome::Success);
    assert_eq!(cmds[1].outcome, edubot_core::domain::Outcome::Error);
}

/// Brute-force count: roster members with at least one exact-code DM
/// between open and close.
fn oracle_present(dms: &[(usize, String)], roster: usize, code: &str) -> usize {
    dms.iter()
        .filter(|(m, text)| *m >= 1 && *m <= roster && text.trim() == code)
        .map(|(m, _)| *m)
        .collect::<BTreeSet<_>>()
        .len()
}

fn dm_strategy() -> impl Strategy<Value = (usize, String)> {
    (
        1usize..=12,
        prop_oneof![
            Just("1423".to_owned()),
            Just(" 1423".to_owned()),
            Just("1424".to_owned()),
            Just("hi".to_owned()),
            "[0-9]{4}",
        ],
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn present_count_matches_brute_force(
        before in proptest::collection::vec(dm_strategy(), 0..10),
        during in proptest::collection::vec(dm_strategy(), 0..60),
        after in proptest::collection::vec(dm_strategy(), 0..10),
        roster in 1usize..=12,
    ) {
        let mut f = Fixture::new(12, roster);
        let mut t = 0;
        for (m, text) in &before {
            t += 1;
            f.dm(&format!("s{m}"), text, ms(t));
        }
        t += 1;
        f.start("g1", "1423", ms(t));
        for (m, text) in &during {
            t += 1;
            f.dm(&format!("s{m}"), text, ms(t));
        }
        t += 1;
        let r = f.run(CommandKind::StopAttendance { group_id: "g1".into() }, ms(t)).unwrap();
        for (m, text) in &after {
            t += 1;
            let actions = f.dm(&format!("s{m}"), text, ms(t));
            prop_assert!(actions.len() <= 1);
        }
        let expected = oracle_present(&during, roster, "1423");
        prop_assert_eq!(r.data.unwrap()["present_count"].as_u64().unwrap() as usize, expected);
        let s = f.engine.session(&SessionId::new("b1-a0001")).unwrap();
        prop_assert_eq!(s.present_count(), expected);
        let ids: BTreeSet<MemberId> = s.checkins.iter().map(|c| c.student_id.clone()).collect();
        prop_assert_eq!(ids.len(), s.checkins.len());
    }
}
