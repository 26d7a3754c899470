//! A bot's final state reduced to what the REST API exposes, in a form that
//! can be compared and stored as a golden file.
//!
//! The same summary is built two ways: from an [`EngineState`] in memory,
//! and from `GET` requests against a running server.

use std::fmt::Write as _;

use edubot_core::domain::{Bucket, Histogram, SessionState, SurveyKind, SurveyState};
use edubot_core::engine::EngineState;
use reqwest::Method;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::client::{ApiClient, ClientError};

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Summary {
    pub sessions: Vec<SessionSummary>,
    pub surveys: Vec<SurveySummary>,
    pub feedback: Vec<FeedbackSummary>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionSummary {
    pub session_id: String,
    pub group_id: String,
    pub code: String,
    pub state: SessionState,
    /// Student ids in check-in order.
    pub present: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SurveySummary {
    pub survey_id: String,
    pub kind: SurveyKind,
    pub state: SurveyState,
    pub respondents: usize,
    /// One histogram per question.
    pub histograms: Vec<Vec<Bucket>>,
    /// Sorted by question, then student.
    pub responses: Vec<ResponseSummary>,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ResponseSummary {
    pub question_index: usize,
    pub student_id: String,
    pub value: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeedbackSummary {
    pub feedback_id: String,
    pub state: SessionState,
    pub histogram: Vec<Bucket>,
}

impl Summary {
    pub fn from_state(s: &EngineState) -> Self {
        let sessions = s
            .sessions
            .values()
            .map(|x| SessionSummary {
                session_id: x.id.to_string(),
                group_id: x.group_id.to_string(),
                code: x.code.to_string(),
                state: x.state,
                present: x.checkins.iter().map(|c| c.student_id.to_string()).collect(),
            })
            .collect();
        let surveys = s
            .surveys
            .values()
            .map(|r| {
                let res = r.results();
                let mut responses: Vec<_> = r
                    .responses
                    .iter()
                    .map(|x| ResponseSummary {
                        question_index: x.question_index,
                        student_id: x.student_id.to_string(),
                        value: x.value.to_plain(),
                    })
                    .collect();
                responses.sort();
                SurveySummary {
                    survey_id: res.survey_id.to_string(),
                    kind: res.kind,
                    state: res.state,
                    respondents: res.respondents,
                    histograms: res.questions.iter().map(|q| q.histogram.buckets().to_vec()).collect(),
                    responses,
                }
            })
            .collect();
        let feedback = s
            .feedback
            .values()
            .map(|r| {
                let res = r.results();
                FeedbackSummary {
                    feedback_id: res.feedback_id.to_string(),
                    state: res.state,
                    histogram: res.histogram.buckets().to_vec(),
                }
            })
            .collect();
        Self {
            sessions,
            surveys,
            feedback,
        }
    }

    /// Reads the summary of `bot` through the REST API.
    pub async fn fetch(client: &ApiClient, bot: &str) -> Result<Self, ClientError> {
        let mut out = Summary::default();
        let list = client.get(&format!("/api/attendance/sessions?bot={bot}")).await?;
        for s in items(list.data(), "sessions") {
            let id = str_field(&s, "session_id");
            let path = format!("/api/attendance/sessions/{id}");
            let r = client.get(&path).await?;
            let d = r.data();
            out.sessions.push(SessionSummary {
                session_id: id,
                group_id: str_field(d, "group_id"),
                code: str_field(d, "code"),
                state: parse(d, "state", &path)?,
                present: items(d, "checkins").iter().map(|c| str_field(c, "student_id")).collect(),
            });
        }
        let list = client.get(&format!("/api/surveys?bot={bot}")).await?;
        for s in items(list.data(), "surveys") {
            let id = str_field(&s, "survey_id");
            let path = format!("/api/surveys/{id}/results");
            let r = client.get(&path).await?;
            let d = r.data();
            let mut responses: Vec<_> = items(d, "responses")
                .iter()
                .map(|x| ResponseSummary {
                    question_index: x["question_index"].as_u64().unwrap_or_default() as usize,
                    student_id: str_field(x, "student_id"),
                    value: str_field(x, "value"),
                })
                .collect();
            responses.sort();
            out.surveys.push(SurveySummary {
                survey_id: id,
                kind: parse(d, "kind", &path)?,
                state: parse(d, "state", &path)?,
                respondents: d["respondents"].as_u64().unwrap_or_default() as usize,
                histograms: items(d, "questions").iter().map(|q| buckets(&q["histogram"])).collect(),
                responses,
            });
        }
        let list = client.get(&format!("/api/feedback?bot={bot}")).await?;
        for f in items(list.data(), "feedback") {
            let id = str_field(&f, "feedback_id");
            let path = format!("/api/feedback/{id}/results");
            let r = client.get(&path).await?;
            let d = r.data();
            out.feedback.push(FeedbackSummary {
                feedback_id: id,
                state: parse(d, "state", &path)?,
                histogram: buckets(&d["histogram"]),
            });
        }
        Ok(out)
    }

    /// Human-readable differences, one per line; empty when equal.
    pub fn diff(&self, actual: &Summary) -> Vec<String> {
        let mut out = Vec::new();
        let want = serde_json::to_value(self).expect("summary serializes");
        let got = serde_json::to_value(actual).expect("summary serializes");
        json_diff("", &want, &got, &mut out);
        out
    }
}

fn items(v: &Value, key: &str) -> Vec<Value> {
    v[key].as_array().cloned().unwrap_or_default()
}

fn str_field(v: &Value, key: &str) -> String {
    v[key].as_str().unwrap_or_default().to_owned()
}

fn parse<T: serde::de::DeserializeOwned>(v: &Value, key: &str, path: &str) -> Result<T, ClientError> {
    serde_json::from_value(v[key].clone()).map_err(|e| ClientError::Body {
        method: Method::GET,
        path: path.to_owned(),
        reason: format!("{key}: {e}"),
    })
}

fn buckets(v: &Value) -> Vec<Bucket> {
    serde_json::from_value::<Histogram>(v.clone())
        .map(|h| h.buckets().to_vec())
        .unwrap_or_default()
}

fn json_diff(path: &str, want: &Value, got: &Value, out: &mut Vec<String>) {
    match (want, got) {
        (Value::Object(a), Value::Object(b)) => {
            for (k, va) in a {
                let p = format!("{path}.{k}");
                match b.get(k) {
                    Some(vb) => json_diff(&p, va, vb, out),
                    None => out.push(format!("{p}: missing")),
                }
            }
            for k in b.keys().filter(|k| !a.contains_key(*k)) {
                out.push(format!("{path}.{k}: unexpected"));
            }
        }
        (Value::Array(a), Value::Array(b)) => {
            for (i, (va, vb)) in a.iter().zip(b).enumerate() {
                json_diff(&format!("{path}[{i}]"), va, vb, out);
            }
            if a.len() != b.len() {
                let mut line = format!("{path}: expected {} entries, found {}", a.len(), b.len());
                for extra in b.iter().skip(a.len()) {
                    let _ = write!(line, "\n  + {extra}");
                }
                for missing in a.iter().skip(b.len()) {
                    let _ = write!(line, "\n  - {missing}");
                }
                out.push(line);
            }
        }
        _ if want != got => out.push(format!("{path}: expected {want}, found {got}")),
        _ => {}
    }
}
