//! Append-only JSON Lines audit log, one file per UTC day.
//!
//! Each line is one [`AuditEvent`]:
//!
//! ```json
//! {"ts":"2025-01-06T09:00:00.120Z","actor":"k1","action":"attendance.start","params":{"bot_id":"b1","code":"1423","group_id":"g1"},"outcome":"success","detail":"Attendance command executed: ..."}
//! ```
//!
//! Events go to `audit-YYYY-MM-DD.jsonl` by the UTC date of their timestamp.
//! A single writer thread owns the files; callers only enqueue. Timestamps
//! within a file never go backwards: an event older than the last line of
//! its file is written with the last line's timestamp.

use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::mpsc;
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;

use chrono::NaiveDate;

use crate::clock::Timestamp;
use crate::domain::AuditEvent;
use crate::engine::AuditSink;

pub fn audit_file_name(date: NaiveDate) -> String {
    format!("audit-{}.jsonl", date.format("%Y-%m-%d"))
}

enum Msg {
    Event(AuditEvent),
    Flush(mpsc::Sender<()>),
    Shutdown,
}

/// Handle to the audit writer thread.
pub struct AuditLog {
    dir: PathBuf,
    tx: mpsc::Sender<Msg>,
    failures: Arc<AtomicU64>,
    written: Arc<AtomicU64>,
    thread: Mutex<Option<JoinHandle<()>>>,
}

impl AuditLog {
    pub fn open(dir: impl Into<PathBuf>) -> io::Result<Self> {
        let dir = dir.into();
        std::fs::create_dir_all(&dir)?;
        let (tx, rx) = mpsc::channel();
        let failures = Arc::new(AtomicU64::new(0));
        let written = Arc::new(AtomicU64::new(0));
        let writer = Writer {
            dir: dir.clone(),
            open: BTreeMap::new(),
            failures: failures.clone(),
            written: written.clone(),
        };
        let thread = std::thread::Builder::new()
            .name("audit-writer".into())
            .spawn(move || writer.run(rx))?;
        Ok(Self {
            dir,
            tx,
            failures,
            written,
            thread: Mutex::new(Some(thread)),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    /// Blocks until every event recorded before the call is on disk.
    pub fn flush(&self) {
        let (tx, rx) = mpsc::channel();
        if self.tx.send(Msg::Flush(tx)).is_ok() {
            let _ = rx.recv();
        }
    }

    /// Number of events that could not be written.
    pub fn failures(&self) -> u64 {
        self.failures.load(Ordering::Relaxed)
    }

    pub fn written(&self) -> u64 {
        self.written.load(Ordering::Relaxed)
    }

    /// Flushes and stops the writer. Further events are dropped.
    pub fn close(&self) {
        let _ = self.tx.send(Msg::Shutdown);
        if let Some(t) = self.thread.lock().unwrap().take() {
            let _ = t.join();
        }
    }

    /// All events on disk, oldest file first.
    pub fn read_all(&self) -> io::Result<Vec<AuditEvent>> {
        self.flush();
        read_audit_dir(&self.dir)
    }
}

impl AuditSink for AuditLog {
    fn record(&self, event: AuditEvent) {
        if self.tx.send(Msg::Event(event.redacted())).is_err() {
            self.failures.fetch_add(1, Ordering::Relaxed);
            tracing::error!("audit writer stopped; event dropped");
        }
    }
}

impl Drop for AuditLog {
    fn drop(&mut self) {
        self.close();
    }
}

struct OpenFile {
    out: BufWriter<File>,
    last_ts: Option<Timestamp>,
}

struct Writer {
    dir: PathBuf,
    open: BTreeMap<NaiveDate, OpenFile>,
    failures: Arc<AtomicU64>,
    written: Arc<AtomicU64>,
}

impl Writer {
    fn run(mut self, rx: mpsc::Receiver<Msg>) {
        while let Ok(msg) = rx.recv() {
            let mut next = Some(msg);
            let mut waiting = Vec::new();
            let mut stop = false;
            while let Some(m) = next.take() {
                match m {
                    Msg::Event(ev) => self.write(ev),
                    Msg::Flush(done) => waiting.push(done),
                    Msg::Shutdown => stop = true,
                }
                if !stop {
                    next = rx.try_recv().ok();
                }
            }
            self.flush_all();
            for w in waiting {
                let _ = w.send(());
            }
            if stop {
                break;
            }
        }
        self.flush_all();
    }

    fn write(&mut self, mut ev: AuditEvent) {
        let date = ev.ts.date_naive();
        let result = self.file(date).and_then(|f| {
            if let Some(last) = f.last_ts {
                ev.ts = ev.ts.max(last);
            }
            let line = serde_json::to_string(&ev).map_err(io::Error::other)?;
            f.out.write_all(line.as_bytes())?;
            f.out.write_all(b"\n")?;
            f.last_ts = Some(ev.ts);
            Ok(())
        });
        match result {
            Ok(()) => {
                self.written.fetch_add(1, Ordering::Relaxed);
            }
            Err(e) => {
                self.failures.fetch_add(1, Ordering::Relaxed);
                // The only escalation path available here; the engine keeps going.
                tracing::error!(error = %e, action = %ev.action, "audit write failed");
                self.open.remove(&date);
            }
        }
    }

    fn file(&mut self, date: NaiveDate) -> io::Result<&mut OpenFile> {
        if !self.open.contains_key(&date) {
            // Only the newest two days stay open.
            while self.open.len() >= 2 {
                let oldest = *self.open.keys().next().unwrap();
                if let Some(mut f) = self.open.remove(&oldest) {
                    let _ = f.out.flush();
                }
            }
            let path = self.dir.join(audit_file_name(date));
            let last_ts = last_timestamp(&path);
            let file = OpenOptions::new().create(true).append(true).open(&path)?;
            self.open.insert(
                date,
                OpenFile {
                    out: BufWriter::new(file),
                    last_ts,
                },
            );
        }
        Ok(self.open.get_mut(&date).unwrap())
    }

    fn flush_all(&mut self) {
        let mut failed = Vec::new();
        for (date, f) in self.open.iter_mut() {
            if let Err(e) = f.out.flush() {
                self.failures.fetch_add(1, Ordering::Relaxed);
                tracing::error!(error = %e, "audit flush failed");
                failed.push(*date);
            }
        }
        for d in failed {
            self.open.remove(&d);
        }
    }
}

fn last_timestamp(path: &Path) -> Option<Timestamp> {
    let f = File::open(path).ok()?;
    BufReader::new(f)
        .lines()
        .map_while(Result::ok)
        .filter(|l| !l.trim().is_empty())
        .last()
        .and_then(|l| serde_json::from_str::<AuditEvent>(&l).ok())
        .map(|e| e.ts)
}

pub fn read_audit_file(path: &Path) -> io::Result<Vec<AuditEvent>> {
    let f = File::open(path)?;
    BufReader::new(f)
        .lines()
        .filter(|l| l.as_ref().map_or(true, |l| !l.trim().is_empty()))
        .map(|l| {
            serde_json::from_str(&l?).map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))
        })
        .collect()
}

/// Reads every `audit-*.jsonl` file in `dir`, in date order.
pub fn read_audit_dir(dir: &Path) -> io::Result<Vec<AuditEvent>> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.starts_with("audit-") && n.ends_with(".jsonl"))
        })
        .collect();
    files.sort();
    let mut out = Vec::new();
    for f in files {
        out.extend(read_audit_file(&f)?);
    }
    Ok(out)
}
