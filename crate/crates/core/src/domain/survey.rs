use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{ChannelId, DomainError, Histogram, MemberId, SurveyId, Timestamp};

/// Default option labels of a five-level difficulty question, easiest first.
pub const DIFFICULTY_LABELS: [&str; 5] = [
    "Very easy",
    "Easy",
    "Just right",
    "Difficult",
    "Very difficult",
];

/// Decile bucket labels used when charting percentage answers.
pub const PERCENTAGE_BUCKETS: [&str; 10] = [
    "0-9", "10-19", "20-29", "30-39", "40-49", "50-59", "60-69", "70-79", "80-89", "90-100",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SurveyKind {
    Simple,
    Complex,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResponseType {
    FiveLevel,
    Percentage,
    FreeText,
}

impl ResponseType {
    pub const ALL: [ResponseType; 3] = [
        ResponseType::FiveLevel,
        ResponseType::Percentage,
        ResponseType::FreeText,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ResponseType::FiveLevel => "five_level",
            ResponseType::Percentage => "percentage",
            ResponseType::FreeText => "free_text",
        }
    }
}

impl fmt::Display for ResponseType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ResponseType {
    type Err = DomainError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| {
                DomainError::InvalidInput(format!(
                    "unknown response_type {s:?} (expected five_level, percentage or free_text)"
                ))
            })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Question {
    pub index: usize,
    pub prompt: String,
    pub response_type: ResponseType,
    #[serde(default)]
    pub options: Vec<String>,
}

impl Question {
    /// Builds a question with the default options for its response type.
    pub fn new(index: usize, prompt: impl Into<String>, response_type: ResponseType) -> Self {
        let options = match response_type {
            ResponseType::FiveLevel => DIFFICULTY_LABELS.iter().map(|s| s.to_string()).collect(),
            _ => Vec::new(),
        };
        Self {
            index,
            prompt: prompt.into(),
            response_type,
            options,
        }
    }

    fn validate(&self) -> Result<(), DomainError> {
        if self.prompt.trim().is_empty() {
            return Err(DomainError::InvalidInput(format!(
                "question {} has an empty prompt",
                self.index
            )));
        }
        let expected = match self.response_type {
            ResponseType::FiveLevel => 5,
            _ => 0,
        };
        if self.options.len() != expected {
            return Err(DomainError::InvalidInput(format!(
                "question {} ({}) must have {expected} options, has {}",
                self.index,
                self.response_type,
                self.options.len()
            )));
        }
        Ok(())
    }

    /// Interprets a typed answer. Five-level questions accept `1`-`5` or an
    /// option label; percentages accept `0`-`100` with an optional `%`.
    pub fn parse_answer(&self, text: &str) -> Option<ResponseValue> {
        let t = text.trim();
        match self.response_type {
            ResponseType::FiveLevel => {
                if let Ok(level) = t.parse::<u8>() {
                    return (1..=5).contains(&level).then_some(ResponseValue::Level(level));
                }
                self.options
                    .iter()
                    .position(|o| o.eq_ignore_ascii_case(t))
                    .map(|i| ResponseValue::Level(i as u8 + 1))
            }
            ResponseType::Percentage => {
                let digits = t.strip_suffix('%').unwrap_or(t).trim();
                match digits.parse::<u8>() {
                    Ok(p) if p <= 100 => Some(ResponseValue::Percent(p)),
                    _ => None,
                }
            }
            ResponseType::FreeText => (!t.is_empty()).then(|| ResponseValue::Text(text.to_owned())),
        }
    }

    pub fn answer_hint(&self) -> String {
        match self.response_type {
            ResponseType::FiveLevel => {
                let opts: Vec<String> = self
                    .options
                    .iter()
                    .enumerate()
                    .map(|(i, o)| format!("{} = {o}", i + 1))
                    .collect();
                format!("Reply with a number from 1 to 5 ({}).", opts.join(", "))
            }
            ResponseType::Percentage => "Reply with a percentage from 0 to 100.".into(),
            ResponseType::FreeText => "Reply with your answer as text.".into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SurveyState {
    Draft,
    Open,
    Closed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SurveyDefinition {
    pub id: SurveyId,
    pub kind: SurveyKind,
    pub title: String,
    pub channel_id: ChannelId,
    pub questions: Vec<Question>,
    /// Seconds after opening at which the survey closes itself.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub duration_secs: Option<u64>,
    pub state: SurveyState,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub opened_at: Option<Timestamp>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub closed_at: Option<Timestamp>,
}

impl SurveyDefinition {
    pub fn simple(
        id: SurveyId,
        channel_id: ChannelId,
        prompt: impl Into<String>,
        duration_secs: Option<u64>,
    ) -> Self {
        let prompt = prompt.into();
        Self {
            id,
            kind: SurveyKind::Simple,
            title: prompt.clone(),
            channel_id,
            questions: vec![Question::new(0, prompt, ResponseType::FiveLevel)],
            duration_secs,
            state: SurveyState::Draft,
            opened_at: None,
            closed_at: None,
        }
    }

    pub fn complex<I, S>(
        id: SurveyId,
        channel_id: ChannelId,
        title: impl Into<String>,
        questions: I,
        duration_secs: Option<u64>,
    ) -> Self
    where
        I: IntoIterator<Item = (S, ResponseType)>,
        S: Into<String>,
    {
        Self {
            id,
            kind: SurveyKind::Complex,
            title: title.into(),
            channel_id,
            questions: questions
                .into_iter()
                .enumerate()
                .map(|(i, (p, t))| Question::new(i, p, t))
                .collect(),
            duration_secs,
            state: SurveyState::Draft,
            opened_at: None,
            closed_at: None,
        }
    }

    pub fn validate(&self) -> Result<(), DomainError> {
        if self.title.trim().is_empty() {
            return Err(DomainError::InvalidInput("survey title must not be empty".into()));
        }
        if self.channel_id.is_empty() {
            return Err(DomainError::InvalidInput("survey needs a channel".into()));
        }
        if self.duration_secs == Some(0) {
            return Err(DomainError::InvalidInput("duration must be positive".into()));
        }
        match self.kind {
            SurveyKind::Simple => {
                if self.questions.len() != 1
                    || self.questions[0].response_type != ResponseType::FiveLevel
                {
                    return Err(DomainError::InvalidInput(
                        "a simple survey has exactly one five-level question".into(),
                    ));
                }
            }
            SurveyKind::Complex => {
                if self.questions.is_empty() {
                    return Err(DomainError::InvalidInput(
                        "a complex survey needs at least one question".into(),
                    ));
                }
            }
        }
        for (i, q) in self.questions.iter().enumerate() {
            if q.index != i {
                return Err(DomainError::InvalidInput(format!(
                    "question indices must be contiguous from 0 (found {} at position {i})",
                    q.index
                )));
            }
            q.validate()?;
        }
        Ok(())
    }

    pub fn is_open(&self) -> bool {
        self.state == SurveyState::Open
    }

    /// When the survey closes itself, if it has a duration and has been opened.
    pub fn deadline(&self) -> Option<Timestamp> {
        let opened = self.opened_at?;
        let secs = self.duration_secs?;
        Some(opened + chrono::Duration::seconds(secs as i64))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResponseValue {
    Level(u8),
    Percent(u8),
    Text(String),
}

impl ResponseValue {
    pub fn matches(&self, rt: ResponseType) -> bool {
        match self {
            ResponseValue::Level(l) => rt == ResponseType::FiveLevel && (1..=5).contains(l),
            ResponseValue::Percent(p) => rt == ResponseType::Percentage && *p <= 100,
            ResponseValue::Text(_) => rt == ResponseType::FreeText,
        }
    }

    /// Storage form: level and percent as integers, text verbatim.
    pub fn to_plain(&self) -> String {
        match self {
            ResponseValue::Level(l) => l.to_string(),
            ResponseValue::Percent(p) => p.to_string(),
            ResponseValue::Text(t) => t.clone(),
        }
    }

    pub fn from_plain(rt: ResponseType, raw: &str) -> Result<Self, DomainError> {
        let bad = || DomainError::InvalidInput(format!("{raw:?} is not a valid {rt} value"));
        let v = match rt {
            ResponseType::FiveLevel => ResponseValue::Level(raw.parse().map_err(|_| bad())?),
            ResponseType::Percentage => ResponseValue::Percent(raw.parse().map_err(|_| bad())?),
            ResponseType::FreeText => ResponseValue::Text(raw.to_owned()),
        };
        if v.matches(rt) {
            Ok(v)
        } else {
            Err(bad())
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SurveyResponse {
    pub survey_id: SurveyId,
    pub question_index: usize,
    pub student_id: MemberId,
    pub value: ResponseValue,
    pub at: Timestamp,
}

/// Trim plus case-fold.
pub fn normalize_free_text(text: &str) -> String {
    text.trim().to_lowercase()
}

/// Counts answers to one question.
///
/// Five-level answers land in one bucket per option, percentages in ten
/// decile buckets (100 joins the last), and free text in one bucket per
/// distinct normalized answer, sorted by label.
pub fn aggregate_survey(
    responses: &[SurveyResponse],
    question: &Question,
) -> Result<Histogram, DomainError> {
    for r in responses {
        if r.question_index != question.index {
            return Err(DomainError::InvalidInput(format!(
                "response for question {} passed with question {}",
                r.question_index, question.index
            )));
        }
        if !r.value.matches(question.response_type) {
            return Err(DomainError::InvalidInput(format!(
                "response from {} does not match response type {}",
                r.student_id, question.response_type
            )));
        }
    }
    let hist = match question.response_type {
        ResponseType::FiveLevel => {
            let mut h = Histogram::with_labels(question.options.iter().cloned());
            for r in responses {
                if let ResponseValue::Level(l) = r.value {
                    h.increment(usize::from(l) - 1);
                }
            }
            h
        }
        ResponseType::Percentage => {
            let mut h = Histogram::with_labels(PERCENTAGE_BUCKETS);
            for r in responses {
                if let ResponseValue::Percent(p) = r.value {
                    h.increment(usize::from(p / 10).min(9));
                }
            }
            h
        }
        ResponseType::FreeText => {
            let mut counts: BTreeMap<String, u64> = BTreeMap::new();
            for r in responses {
                if let ResponseValue::Text(t) = &r.value {
                    *counts.entry(normalize_free_text(t)).or_default() += 1;
                }
            }
            Histogram::from_buckets(
                counts
                    .into_iter()
                    .map(|(label, count)| super::Bucket { label, count })
                    .collect(),
            )
        }
    };
    Ok(hist)
}
