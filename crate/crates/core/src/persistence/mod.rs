//! Durable storage: CSV exports, the daily audit log, the encrypted secrets
//! file and the bot registry.
//!
//! Everything lives under one data root:
//!
//! ```text
//! {root}/data/attendance/{session_id}.csv
//! {root}/data/surveys/{survey_id}.csv
//! {root}/logs/audit-YYYY-MM-DD.jsonl
//! {root}/.secrets.json
//! {root}/registry.json
//! ```
//!
//! Files that are replaced as a whole are written to a temporary file in the
//! same directory and renamed into place, so a reader never sees a partial
//! file at the final path.

mod audit;
mod csv_export;
mod registry;
mod secrets;

use std::io::{self, Write};
use std::path::{Path, PathBuf};

pub use audit::{audit_file_name, read_audit_dir, read_audit_file, AuditLog};
pub use csv_export::{
    attendance_rows, format_ts, parse_ts, read_attendance_csv, read_survey_csv, survey_rows,
    write_attendance_csv, write_survey_csv, AttendanceRow, CsvExporter, SurveyRow,
    ATTENDANCE_HEADER, SURVEY_HEADER,
};
pub use registry::{BotRecord, Registry, RegistryWriter};
pub use secrets::{load_secrets, save_secrets, KdfParams, SecretsError, SecretsFile};

/// Paths below a data root.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DataLayout {
    root: PathBuf,
}

impl DataLayout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn attendance_dir(&self) -> PathBuf {
        self.root.join("data").join("attendance")
    }

    pub fn surveys_dir(&self) -> PathBuf {
        self.root.join("data").join("surveys")
    }

    pub fn logs_dir(&self) -> PathBuf {
        self.root.join("logs")
    }

    pub fn secrets_path(&self) -> PathBuf {
        self.root.join(".secrets.json")
    }

    pub fn registry_path(&self) -> PathBuf {
        self.root.join("registry.json")
    }

    /// Creates the directory tree.
    pub fn ensure(&self) -> io::Result<()> {
        for dir in [self.attendance_dir(), self.surveys_dir(), self.logs_dir()] {
            std::fs::create_dir_all(dir)?;
        }
        Ok(())
    }
}

/// Writes `path` by way of a temporary sibling and an atomic rename.
pub fn write_atomic(path: &Path, write: impl FnOnce(&mut dyn Write) -> io::Result<()>) -> io::Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    {
        let mut buf = io::BufWriter::new(tmp.as_file_mut());
        write(&mut buf)?;
        buf.flush()?;
    }
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn atomic_write_replaces_whole_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.txt");
        write_atomic(&p, |w| w.write_all(b"first version")).unwrap();
        write_atomic(&p, |w| w.write_all(b"second")).unwrap();
        assert_eq!(std::fs::read_to_string(&p).unwrap(), "second");
    }

    #[test]
    fn failed_write_leaves_previous_content() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.txt");
        write_atomic(&p, |w| w.write_all(b"good")).unwrap();
        let err = write_atomic(&p, |w| {
            w.write_all(b"partial")?;
            Err(io::Error::other("disk full"))
        });
        assert!(err.is_err());
        assert_eq!(std::fs::read_to_string(&p).unwrap(), "good");
        let leftovers = std::fs::read_dir(dir.path()).unwrap().count();
        assert_eq!(leftovers, 1);
    }
}
