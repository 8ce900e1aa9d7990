//! Append-only JSONL session log: one `{seq, ...event}` object per line.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use ndarray::Array1;
use serde::{Deserialize, Serialize};

use super::index::RetrievalIndex;
use super::session::{FeedbackRound, Session, SessionConfig, SessionEvent};
use crate::{Error, Real, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRecord {
    pub seq: u64,
    /// Wall-clock milliseconds since the Unix epoch; informational only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ts_ms: Option<u64>,
    #[serde(flatten)]
    pub event: SessionEvent,
}

pub struct EventLog {
    path: PathBuf,
    file: File,
    next_seq: u64,
}

impl EventLog {
    /// Open (creating if needed) and return the log with its existing records.
    pub fn open(path: impl AsRef<Path>) -> Result<(Self, Vec<LogRecord>)> {
        let path = path.as_ref().to_path_buf();
        let records = if path.exists() { read_log(&path)? } else { Vec::new() };
        let file = OpenOptions::new().create(true).append(true).open(&path).map_err(|e| Error::io(&path, e))?;
        let next_seq = records.last().map_or(1, |r| r.seq + 1);
        Ok((Self { path, file, next_seq }, records))
    }

    pub fn next_seq(&self) -> u64 {
        self.next_seq
    }

    pub fn append(&mut self, event: SessionEvent) -> Result<LogRecord> {
        let ts_ms =
            std::time::SystemTime::now().duration_since(std::time::UNIX_EPOCH).ok().map(|d| d.as_millis() as u64);
        let rec = LogRecord { seq: self.next_seq, ts_ms, event };
        let mut line = serde_json::to_string(&rec).expect("events serialise");
        line.push('\n');
        self.file.write_all(line.as_bytes()).map_err(|e| Error::io(&self.path, e))?;
        self.file.flush().map_err(|e| Error::io(&self.path, e))?;
        self.next_seq += 1;
        Ok(rec)
    }

    pub fn append_all(&mut self, events: impl IntoIterator<Item = SessionEvent>) -> Result<Vec<LogRecord>> {
        events.into_iter().map(|e| self.append(e)).collect()
    }
}

pub fn read_log(path: impl AsRef<Path>) -> Result<Vec<LogRecord>> {
    let path = path.as_ref();
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out: Vec<LogRecord> = Vec::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: LogRecord =
            serde_json::from_str(&line).map_err(|e| Error::Schema { line: i + 1, message: e.to_string() })?;
        if out.last().is_some_and(|p| rec.seq <= p.seq) {
            return Err(Error::Schema {
                line: i + 1,
                message: format!("sequence number {} is not increasing", rec.seq),
            });
        }
        out.push(rec);
    }
    Ok(out)
}

/// Rebuild a session by re-applying the input events. Every recorded
/// adaptation must be reproduced with the same model hash.
pub fn replay<T: Real>(index: &RetrievalIndex<T>, config: SessionConfig, records: &[LogRecord]) -> Result<Session<T>> {
    let mut s = Session::new(config);
    let mut produced: Vec<String> = Vec::new();
    let mut expected: Vec<String> = Vec::new();
    for r in records {
        match &r.event {
            SessionEvent::Query { query_id, vector } => {
                let v: Array1<T> = vector.iter().map(|x| T::lit(*x)).collect();
                s = s.issue_query(query_id, v.view())?;
            }
            SessionEvent::Feedback { query_id, selected_ids, .. } => {
                let fb = FeedbackRound { query_id: query_id.clone(), selected_ids: selected_ids.clone(), round: 0 };
                let (next, evs) = s.apply_feedback(index, &fb)?;
                s = next;
                produced.extend(hashes(&evs));
            }
            SessionEvent::ReadaptRequested => match s.relearn() {
                Ok((next, evs)) => {
                    s = next;
                    produced.extend(hashes(&evs));
                }
                Err(e) => tracing::warn!(seq = r.seq, error = %e, "replayed re-adapt request failed again"),
            },
            SessionEvent::Adapted { model_hash, .. } => expected.push(model_hash.clone()),
            SessionEvent::DimsEstimated { .. } | SessionEvent::AdaptationFailed { .. } => {}
        }
    }
    if produced != expected {
        return Err(Error::InvalidInput(format!(
            "replay diverged: log records {} adaptations {:?}, replay produced {:?}",
            expected.len(),
            expected,
            produced
        )));
    }
    Ok(s)
}

fn hashes(evs: &[SessionEvent]) -> Vec<String> {
    evs.iter()
        .filter_map(|e| match e {
            SessionEvent::Adapted { model_hash, .. } => Some(model_hash.clone()),
            _ => None,
        })
        .collect()
}
