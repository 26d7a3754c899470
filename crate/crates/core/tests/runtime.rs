mod common;

use std::sync::{Arc, Mutex};
use std::time::Duration;

use common::*;
use edubot_core::clock::{ManualClock, SystemClock};
use edubot_core::domain::{MemberId, SessionId, SurveyId, SurveyState};
use edubot_core::engine::{Command, CommandKind, DispatchError, EngineHandle};
use edubot_core::gateway::Behavior;

fn handle(f: Fixture) -> (EngineHandle, Arc<edubot_core::gateway::SimPlatform>, Arc<Mutex<usize>>) {
    let changes = Arc::new(Mutex::new(0));
    let c = changes.clone();
    let platform = f.platform.clone();
    let h = EngineHandle::spawn(
        f.engine,
        Arc::new(SystemClock),
        Some(Box::new(move |_state| *c.lock().unwrap() += 1)),
    );
    let events = h.events();
    platform.set_event_sink(move |ev| {
        events.send(ev);
    });
    (h, platform, changes)
}

#[tokio::test]
async fn commands_events_and_reads_share_one_order() {
    let (h, platform, changes) = handle(Fixture::new(20, 20));
    let r = h
        .execute(Command::new(
            "k1",
            CommandKind::StartAttendance {
                group_id: "g1".into(),
                code: "1423".into(),
            },
        ))
        .await
        .unwrap();
    assert!(r.message.starts_with("Attendance command executed"));
    for i in 1..=20 {
        platform
            .inject(&MemberId::new(format!("s{i}")), &Behavior::dm("1423"))
            .unwrap();
    }
    // The read is queued behind all 20 events.
    let present = h
        .read(|e| e.session(&SessionId::new("b1-a0001")).unwrap().present_count())
        .await
        .unwrap();
    assert_eq!(present, 20);
    assert!(*changes.lock().unwrap() >= 1);
    let engine = h.shutdown().unwrap();
    assert_eq!(engine.state().sessions.len(), 1);
}

#[tokio::test]
async fn engine_errors_pass_through_and_stopped_engine_is_reported() {
    let (h, _, _) = handle(Fixture::new(2, 2));
    let err = h
        .execute(Command::new("k1", CommandKind::StopAttendance { group_id: "g1".into() }))
        .await
        .unwrap_err();
    assert!(matches!(err, DispatchError::Engine(_)));
    h.shutdown();
    let err = h.execute(Command::new("k1", CommandKind::Ping)).await.unwrap_err();
    assert_eq!(err, DispatchError::Stopped);
}

#[tokio::test]
async fn busy_engine_misses_the_ack_deadline() {
    let (h, _, _) = handle(Fixture::new(2, 2));
    // Occupy the engine thread for longer than the deadline.
    let busy = h.read(|_| std::thread::sleep(Duration::from_millis(2_300)));
    let ping = h.execute(Command::new("k1", CommandKind::Ping));
    let (busy, err) = tokio::join!(busy, async { ping.await.unwrap_err() });
    assert_eq!(busy.unwrap_err(), DispatchError::DeadlineExceeded);
    assert_eq!(err, DispatchError::DeadlineExceeded);
}

#[tokio::test]
async fn tick_sweeps_at_the_clock_time_in_queue_order() {
    let f = Fixture::new(3, 3);
    let platform = f.platform.clone();
    let clock = Arc::new(ManualClock::new(t0()));
    let h = EngineHandle::spawn(f.engine, clock.clone(), None);
    let events = h.events();
    platform.set_event_sink(move |ev| {
        events.send(ev);
    });
    let r = h
        .execute(Command::new(
            "k1",
            CommandKind::CreateSimpleSurvey {
                channel_id: "lecture".into(),
                question: "How was it?".into(),
                duration_secs: Some(60),
            },
        ))
        .await
        .unwrap();
    let id = SurveyId::new(r.data.unwrap()["survey_id"].as_str().unwrap());
    platform
        .inject_at(&"s1".into(), &Behavior::click_in("level-2", "lecture"), secs(30))
        .unwrap();
    clock.set(secs(61));
    // Queued ahead of the late click, so the click finds the survey closed.
    let tick = h.tick();
    platform
        .inject_at(&"s2".into(), &Behavior::click_in("level-4", "lecture"), secs(61))
        .unwrap();
    tick.await.unwrap();
    let (state, responses) = h
        .read(move |e| {
            let s = e.survey(&id).unwrap();
            (s.definition.state, s.responses.len())
        })
        .await
        .unwrap();
    assert_eq!(state, SurveyState::Closed);
    assert_eq!(responses, 1);
    h.shutdown();
    assert_eq!(h.tick().await, Err(DispatchError::Stopped));
}
