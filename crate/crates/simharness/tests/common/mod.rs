//! Seeded scenario generators and independent recounts shared by the
//! harness tests.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use edubot_core::clock::ManualClock;
use edubot_core::domain::{Group, ResponseType};
use edubot_core::engine::{CommandKind, QuestionSpec};
use edubot_core::gateway::{Behavior, ChatEvent, GuildSpec, MemberSpec, ScriptEntry, SimScenario};
use edubot_server::RateLimit;
use edubot_simharness::{Stack, StackOptions};
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Display names that need quoting or are not ASCII.
pub const NAMES: [&str; 8] = [
    "Ada Lovelace",
    "O'Brien, Pat",
    "Zoë \"Z\" Ng",
    "李雷",
    "  Space Cadet ",
    "semi;colon",
    "Tab\tName",
    "Grace Hopper",
];

/// Free-text answers; several normalize to the same bucket.
pub const FREE_TEXT: [&str; 9] = [
    "Recursion",
    "recursion ",
    "  RECURSION",
    "pointers, mostly",
    "Pointers, mostly",
    "the \"build\" step",
    "line one\nline two",
    "ça va",
    "nothing",
];

pub const SIMPLE_SURVEY: &str = "b1-s0001";
pub const COMPLEX_SURVEY: &str = "b1-s0002";

pub fn guild(students: usize, rng: &mut ChaCha8Rng) -> GuildSpec {
    let members: Vec<MemberSpec> = (1..=students)
        .map(|i| MemberSpec::new(format!("s{i}"), *NAMES.choose(rng).unwrap()))
        .collect();
    GuildSpec {
        guild_id: "course".into(),
        channels: vec!["lecture".into(), "lab".into()],
        groups: vec![Group::new("g1", "lecture").with_roster(members.iter().map(|m| m.id.clone()))],
        members,
        roles: vec!["tutor".into()],
        admin_role_id: "admin".into(),
    }
}

/// A generated lecture: attendance, a simple survey and a complex survey,
/// all closed at the end.
pub struct Lecture {
    pub scenario: SimScenario,
    pub code: String,
    pub question_types: Vec<ResponseType>,
}

pub fn random_lecture(seed: u64) -> Lecture {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(5..=25);
    let mut sc = SimScenario::new(seed, guild(n, &mut rng));
    let code = format!("{:04}", rng.random_range(0..10_000));
    let wrong = format!("{:04}", (code.parse::<u32>().unwrap() + 1) % 10_000);
    sc.push(ScriptEntry::command(
        0,
        "k1",
        CommandKind::StartAttendance {
            group_id: "g1".into(),
            code: code.clone(),
        },
    ));
    for i in 1..=n {
        if rng.random_bool(0.85) {
            let text = if rng.random_bool(0.1) { &wrong } else { &code };
            sc.push(ScriptEntry::member(100 + i as u64 * 20, format!("s{i}"), Behavior::dm(text)));
        }
    }

    sc.push(ScriptEntry::command(
        2_000,
        "k1",
        CommandKind::CreateSimpleSurvey {
            channel_id: "lecture".into(),
            question: "How was the pace?".into(),
            duration_secs: None,
        },
    ));
    let mut clicks = Vec::new();
    for i in 1..=n {
        if rng.random_bool(0.8) {
            for _ in 0..rng.random_range(1..=3) {
                clicks.push((rng.random_range(2_100..4_900), i));
            }
        }
    }
    clicks.sort();
    for (at, i) in clicks {
        let level = rng.random_range(1..=5);
        sc.push(ScriptEntry::member(
            at,
            format!("s{i}"),
            Behavior::click_in(format!("level-{level}"), "lecture"),
        ));
    }

    let question_types: Vec<ResponseType> = (0..rng.random_range(1..=3))
        .map(|_| *ResponseType::ALL.choose(&mut rng).unwrap())
        .collect();
    sc.push(ScriptEntry::command(
        5_000,
        "k1",
        CommandKind::CreateComplexSurvey {
            channel_id: "lab".into(),
            title: "Exercise sheet".into(),
            questions: question_types
                .iter()
                .enumerate()
                .map(|(q, rt)| QuestionSpec {
                    prompt: format!("Question {}", q + 1),
                    response_type: *rt,
                })
                .collect(),
            duration_secs: None,
        },
    ));
    for i in 1..=n {
        if !rng.random_bool(0.7) {
            continue;
        }
        let m = format!("s{i}");
        let mut at = 5_100 + i as u64 * 300;
        sc.push(ScriptEntry::member(at, m.clone(), Behavior::click_in("participate", "lab")));
        for rt in question_types.iter().take(rng.random_range(0..=question_types.len())) {
            if rng.random_bool(0.2) {
                at += 10;
                sc.push(ScriptEntry::member(at, m.clone(), Behavior::dm(invalid_answer(*rt, &mut rng))));
            }
            at += 10;
            sc.push(ScriptEntry::member(at, m.clone(), valid_answer(*rt, &mut rng)));
        }
    }
    let end = 5_100 + (n as u64 + 1) * 300 + 1_000;
    for (k, command) in [
        CommandKind::CloseSurvey {
            survey_id: COMPLEX_SURVEY.into(),
        },
        CommandKind::CloseSurvey {
            survey_id: SIMPLE_SURVEY.into(),
        },
        CommandKind::StopAttendance { group_id: "g1".into() },
    ]
    .into_iter()
    .enumerate()
    {
        sc.push(ScriptEntry::command(end + k as u64 * 100, "k1", command));
    }
    Lecture {
        scenario: sc,
        code,
        question_types,
    }
}

fn valid_answer(rt: ResponseType, rng: &mut ChaCha8Rng) -> Behavior {
    match rt {
        ResponseType::FiveLevel => {
            let level = rng.random_range(1..=5);
            if rng.random_bool(0.5) {
                Behavior::click(format!("answer-{level}"))
            } else {
                Behavior::dm(level.to_string())
            }
        }
        ResponseType::Percentage => {
            let p = rng.random_range(0..=100);
            Behavior::dm(if rng.random_bool(0.5) { format!("{p}%") } else { p.to_string() })
        }
        ResponseType::FreeText => Behavior::dm(*FREE_TEXT.choose(rng).unwrap()),
    }
}

fn invalid_answer(rt: ResponseType, rng: &mut ChaCha8Rng) -> String {
    let pool: &[&str] = match rt {
        ResponseType::FiveLevel => &["seven", "0", "9"],
        ResponseType::Percentage => &["lots", "150", "-5"],
        ResponseType::FreeText => &["   "],
    };
    pool.choose(rng).unwrap().to_string()
}

/// Answer counts recomputed from the platform event log alone.
#[derive(Debug, Default, PartialEq, Eq)]
pub struct Recount {
    pub simple: Vec<u64>,
    pub questions: Vec<Vec<(String, u64)>>,
    pub respondents: usize,
    pub responses: usize,
}

pub fn parse_event_log(jsonl: &str) -> Vec<ChatEvent> {
    jsonl
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).expect("event log line parses"))
        .collect()
}

pub fn recount(events: &[ChatEvent], types: &[ResponseType]) -> Recount {
    let mut simple: BTreeMap<String, usize> = BTreeMap::new();
    let mut position: BTreeMap<String, usize> = BTreeMap::new();
    let mut answers: Vec<Vec<String>> = vec![Vec::new(); types.len()];
    let mut respondents = BTreeSet::new();
    for e in events {
        let (member, answer) = match e {
            ChatEvent::ButtonClick { member_id, button_id, .. } => {
                let m = member_id.to_string();
                if let Some(k) = button_id.strip_prefix("level-") {
                    simple.insert(m, k.parse().unwrap());
                    continue;
                }
                if button_id == "participate" {
                    position.entry(m).or_insert(0);
                    continue;
                }
                match button_id.strip_prefix("answer-") {
                    Some(k) => (m, Some(k.to_owned())),
                    None => continue,
                }
            }
            ChatEvent::DirectMessage { member_id, text, .. } => (member_id.to_string(), Some(text.clone())),
            _ => continue,
        };
        let Some(pos) = position.get_mut(&member) else { continue };
        if *pos >= types.len() {
            continue;
        }
        let text = answer.unwrap();
        let accepted = match types[*pos] {
            ResponseType::FiveLevel => text.trim().parse::<u8>().ok().filter(|l| (1..=5).contains(l)).map(|l| l.to_string()),
            ResponseType::Percentage => {
                let t = text.trim();
                let t = t.strip_suffix('%').unwrap_or(t).trim();
                t.parse::<u8>().ok().filter(|p| *p <= 100).map(|p| p.to_string())
            }
            ResponseType::FreeText => Some(text.trim().to_lowercase()).filter(|t| !t.is_empty()),
        };
        if let Some(v) = accepted {
            answers[*pos].push(v);
            respondents.insert(member);
            *pos += 1;
        }
    }
    let mut simple_counts = vec![0u64; 5];
    for level in simple.values() {
        simple_counts[level - 1] += 1;
    }
    let questions = types
        .iter()
        .zip(&answers)
        .map(|(rt, values)| match rt {
            ResponseType::FiveLevel => {
                let mut c = vec![0u64; 5];
                for v in values {
                    c[v.parse::<usize>().unwrap() - 1] += 1;
                }
                c.into_iter().map(|n| (String::new(), n)).collect()
            }
            ResponseType::Percentage => {
                let mut c = vec![0u64; 10];
                for v in values {
                    c[(v.parse::<usize>().unwrap() / 10).min(9)] += 1;
                }
                c.into_iter().map(|n| (String::new(), n)).collect()
            }
            ResponseType::FreeText => {
                let mut c: BTreeMap<String, u64> = BTreeMap::new();
                for v in values {
                    *c.entry(v.clone()).or_default() += 1;
                }
                c.into_iter().collect()
            }
        })
        .collect();
    Recount {
        simple: simple_counts,
        questions,
        respondents: respondents.len(),
        responses: answers.iter().map(Vec::len).sum(),
    }
}

/// Stack for scenario runs: manual clock at the scenario epoch and no rate
/// limit.
pub async fn scenario_stack(sc: &SimScenario) -> Stack {
    Stack::start(StackOptions {
        rate_limit: RateLimit {
            max_requests: usize::MAX,
            ..RateLimit::default()
        },
        clock: Some(Arc::new(ManualClock::new(sc.epoch))),
        ..StackOptions::default()
    })
    .await
    .expect("stack starts")
}
