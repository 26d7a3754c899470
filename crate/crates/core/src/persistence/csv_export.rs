//! Attendance and survey exports as RFC 4180 CSV.
//!
//! Attendance (`data/attendance/{session_id}.csv`):
//!
//! ```text
//! session_id,group_id,code,student_id,display_name,checkin_ts
//! b1-a0001,g1,1423,s1,"Lovelace, Ada",2025-01-06T09:00:12.345Z
//! ```
//!
//! Surveys (`data/surveys/{survey_id}.csv`), one row per stored response:
//!
//! ```text
//! survey_id,question_index,prompt,student_id,response_type,value,ts
//! b1-s0002,0,How hard was the lab?,s1,five_level,4,2025-01-06T09:10:00Z
//! b1-s0002,1,How much did you finish?,s1,percentage,80,2025-01-06T09:10:30Z
//! ```
//!
//! Levels are written as 1-5, percentages as integers 0-100 and free text
//! verbatim. Timestamps are UTC RFC 3339 with as many fractional digits as
//! needed to round-trip exactly.

use std::io;
use std::path::{Path, PathBuf};

use chrono::{DateTime, SecondsFormat, Utc};
use serde::{Deserialize, Serialize};

use super::{write_atomic, DataLayout};
use crate::clock::Timestamp;
use crate::domain::{
    AttendanceSession, CheckIn, MemberId, ResponseType, ResponseValue, SurveyDefinition,
    SurveyResponse,
};
use crate::engine::ExportSink;

pub const ATTENDANCE_HEADER: [&str; 6] = [
    "session_id",
    "group_id",
    "code",
    "student_id",
    "display_name",
    "checkin_ts",
];

pub const SURVEY_HEADER: [&str; 7] = [
    "survey_id",
    "question_index",
    "prompt",
    "student_id",
    "response_type",
    "value",
    "ts",
];

pub fn format_ts(ts: &Timestamp) -> String {
    ts.to_rfc3339_opts(SecondsFormat::AutoSi, true)
}

pub fn parse_ts(s: &str) -> Result<Timestamp, chrono::ParseError> {
    DateTime::parse_from_rfc3339(s).map(|t| t.with_timezone(&Utc))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttendanceRow {
    pub session_id: String,
    pub group_id: String,
    pub code: String,
    pub student_id: String,
    pub display_name: String,
    pub checkin_ts: String,
}

impl AttendanceRow {
    pub fn checkin(&self) -> Result<CheckIn, chrono::ParseError> {
        Ok(CheckIn {
            student_id: MemberId::new(self.student_id.clone()),
            display_name: self.display_name.clone(),
            at: parse_ts(&self.checkin_ts)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SurveyRow {
    pub survey_id: String,
    pub question_index: usize,
    pub prompt: String,
    pub student_id: String,
    pub response_type: String,
    pub value: String,
    pub ts: String,
}

impl SurveyRow {
    pub fn response(&self) -> Result<SurveyResponse, String> {
        let rt: ResponseType = self.response_type.parse().map_err(|e| format!("{e}"))?;
        Ok(SurveyResponse {
            survey_id: self.survey_id.as_str().into(),
            question_index: self.question_index,
            student_id: self.student_id.as_str().into(),
            value: ResponseValue::from_plain(rt, &self.value).map_err(|e| e.to_string())?,
            at: parse_ts(&self.ts).map_err(|e| e.to_string())?,
        })
    }
}

pub fn attendance_rows(session: &AttendanceSession) -> Vec<AttendanceRow> {
    session
        .checkins
        .iter()
        .map(|c| AttendanceRow {
            session_id: session.id.to_string(),
            group_id: session.group_id.to_string(),
            code: session.code.to_string(),
            student_id: c.student_id.to_string(),
            display_name: c.display_name.clone(),
            checkin_ts: format_ts(&c.at),
        })
        .collect()
}

pub fn survey_rows(survey: &SurveyDefinition, responses: &[SurveyResponse]) -> Vec<SurveyRow> {
    responses
        .iter()
        .map(|r| {
            let q = survey.questions.get(r.question_index);
            SurveyRow {
                survey_id: survey.id.to_string(),
                question_index: r.question_index,
                prompt: q.map(|q| q.prompt.clone()).unwrap_or_default(),
                student_id: r.student_id.to_string(),
                response_type: q
                    .map(|q| q.response_type.as_str().to_owned())
                    .unwrap_or_default(),
                value: r.value.to_plain(),
                ts: format_ts(&r.at),
            }
        })
        .collect()
}

fn write_rows<R: Serialize>(path: &Path, header: &[&str], rows: &[R]) -> io::Result<()> {
    write_atomic(path, |w| {
        let mut csv = csv::WriterBuilder::new().has_headers(false).from_writer(w);
        csv.write_record(header)?;
        for r in rows {
            csv.serialize(r)?;
        }
        csv.flush()?;
        Ok(())
    })
}

fn read_rows<R: for<'de> Deserialize<'de>>(path: &Path, header: &[&str]) -> io::Result<Vec<R>> {
    let mut reader = csv::Reader::from_path(path)?;
    let found = reader.headers()?.clone();
    if found.iter().ne(header.iter().copied()) {
        return Err(io::Error::new(
            io::ErrorKind::InvalidData,
            format!("unexpected CSV header {found:?}"),
        ));
    }
    reader
        .deserialize()
        .map(|r| r.map_err(io::Error::from))
        .collect()
}

pub fn write_attendance_csv(dir: &Path, session: &AttendanceSession) -> io::Result<PathBuf> {
    let path = dir.join(format!("{}.csv", session.id));
    write_rows(&path, &ATTENDANCE_HEADER, &attendance_rows(session))?;
    Ok(path)
}

pub fn read_attendance_csv(path: &Path) -> io::Result<Vec<AttendanceRow>> {
    read_rows(path, &ATTENDANCE_HEADER)
}

pub fn write_survey_csv(
    dir: &Path,
    survey: &SurveyDefinition,
    responses: &[SurveyResponse],
) -> io::Result<PathBuf> {
    let path = dir.join(format!("{}.csv", survey.id));
    write_rows(&path, &SURVEY_HEADER, &survey_rows(survey, responses))?;
    Ok(path)
}

pub fn read_survey_csv(path: &Path) -> io::Result<Vec<SurveyRow>> {
    read_rows(path, &SURVEY_HEADER)
}

/// [`ExportSink`] writing into a [`DataLayout`].
#[derive(Debug, Clone)]
pub struct CsvExporter {
    layout: DataLayout,
}

impl CsvExporter {
    pub fn new(layout: DataLayout) -> Self {
        Self { layout }
    }
}

impl ExportSink for CsvExporter {
    fn export_attendance(&self, session: &AttendanceSession) -> Result<PathBuf, String> {
        write_attendance_csv(&self.layout.attendance_dir(), session).map_err(|e| e.to_string())
    }

    fn export_survey(
        &self,
        survey: &SurveyDefinition,
        responses: &[SurveyResponse],
    ) -> Result<PathBuf, String> {
        write_survey_csv(&self.layout.surveys_dir(), survey, responses).map_err(|e| e.to_string())
    }
}
