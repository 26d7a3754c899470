//! Outputs of the engine that leave the process: audit events and exports.

use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Mutex;

use crate::domain::{AttendanceSession, AuditEvent, SurveyDefinition, SurveyResponse};

pub trait AuditSink: Send + Sync {
    /// Queues one event. Must not block on I/O or fail the caller.
    fn record(&self, event: AuditEvent);
}

pub trait ExportSink: Send + Sync {
    fn export_attendance(&self, session: &AttendanceSession) -> Result<PathBuf, String>;

    fn export_survey(
        &self,
        survey: &SurveyDefinition,
        responses: &[SurveyResponse],
    ) -> Result<PathBuf, String>;
}

/// Discards everything.
#[derive(Debug, Default)]
pub struct NullAudit;

impl AuditSink for NullAudit {
    fn record(&self, _event: AuditEvent) {}
}

/// Keeps events in memory, for tests and the scenario runner.
#[derive(Debug, Default)]
pub struct MemoryAudit {
    events: Mutex<Vec<AuditEvent>>,
}

impl MemoryAudit {
    pub fn events(&self) -> Vec<AuditEvent> {
        self.events.lock().unwrap().clone()
    }

    pub fn actions(&self) -> Vec<String> {
        self.events
            .lock()
            .unwrap()
            .iter()
            .map(|e| e.action.clone())
            .collect()
    }
}

impl AuditSink for MemoryAudit {
    fn record(&self, event: AuditEvent) {
        self.events.lock().unwrap().push(event.redacted());
    }
}

/// Keeps exported snapshots in memory. Can be told to fail.
#[derive(Debug, Default)]
pub struct MemoryExports {
    attendance: Mutex<Vec<AttendanceSession>>,
    surveys: Mutex<Vec<(SurveyDefinition, Vec<SurveyResponse>)>>,
    failing: AtomicBool,
}

impl MemoryExports {
    pub fn set_failing(&self, failing: bool) {
        self.failing.store(failing, Ordering::SeqCst);
    }

    pub fn attendance(&self) -> Vec<AttendanceSession> {
        self.attendance.lock().unwrap().clone()
    }

    pub fn surveys(&self) -> Vec<(SurveyDefinition, Vec<SurveyResponse>)> {
        self.surveys.lock().unwrap().clone()
    }

    fn check(&self) -> Result<(), String> {
        if self.failing.load(Ordering::SeqCst) {
            Err("export target unavailable".into())
        } else {
            Ok(())
        }
    }
}

impl ExportSink for MemoryExports {
    fn export_attendance(&self, session: &AttendanceSession) -> Result<PathBuf, String> {
        self.check()?;
        self.attendance.lock().unwrap().push(session.clone());
        Ok(PathBuf::from(format!("memory/attendance/{}.csv", session.id)))
    }

    fn export_survey(
        &self,
        survey: &SurveyDefinition,
        responses: &[SurveyResponse],
    ) -> Result<PathBuf, String> {
        self.check()?;
        self.surveys
            .lock()
            .unwrap()
            .push((survey.clone(), responses.to_vec()));
        Ok(PathBuf::from(format!("memory/surveys/{}.csv", survey.id)))
    }
}
