//! Append-only NDJSON event log.
//!
//! One record per line. Sequence numbers start at 1 and must be gapless;
//! a log that breaks continuity is refused as a whole.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use hazardline_core::fusion::{CitizenReport, Decision};
use hazardline_core::polfc::{Plan, ReplanTrigger, StrategyId};
use hazardline_core::sched::RunProgress;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "payload", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Event {
    SessionCreated {
        session_id: String,
    },
    ReportIngested {
        report: CitizenReport,
    },
    ReportReviewed {
        report_id: String,
        decision: Decision,
        reviewer: String,
    },
    /// Accepted reports assimilated into the belief; `digest` is the
    /// resulting belief digest, checked on replay.
    BeliefUpdated {
        generation: u64,
        reports: Vec<String>,
        digest: String,
    },
    RunStarted {
        run_id: String,
        session_id: String,
        trigger: ReplanTrigger,
    },
    RunProgress {
        run_id: String,
        progress: RunProgress,
    },
    PlanComputed {
        run_id: String,
        outcome: RunOutcome,
    },
    StrategyCommitted {
        session_id: String,
        strategy_id: StrategyId,
    },
}

/// The plan itself is recorded, since a deadline-bounded evaluation is not
/// reproducible on replay. Externally tagged: plans hold integer-keyed maps,
/// which serde cannot read back through a buffered (internally tagged or
/// flattened) representation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum RunOutcome {
    Plan { plan: Box<Plan> },
    Failed { message: String },
}

impl Event {
    pub fn kind(&self) -> &'static str {
        match self {
            Event::SessionCreated { .. } => "SESSION_CREATED",
            Event::ReportIngested { .. } => "REPORT_INGESTED",
            Event::ReportReviewed { .. } => "REPORT_REVIEWED",
            Event::BeliefUpdated { .. } => "BELIEF_UPDATED",
            Event::RunStarted { .. } => "RUN_STARTED",
            Event::RunProgress { .. } => "RUN_PROGRESS",
            Event::PlanComputed { .. } => "PLAN_COMPUTED",
            Event::StrategyCommitted { .. } => "STRATEGY_COMMITTED",
        }
    }

    /// Check `payload` against the schema of `kind`.
    pub fn from_parts(kind: &str, payload: Value) -> Result<Self, EventError> {
        serde_json::from_value(serde_json::json!({ "kind": kind, "payload": payload }))
            .map_err(|e| EventError::Schema { kind: kind.into(), message: e.to_string() })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawRecord", into = "RawRecord")]
pub struct EventRecord {
    pub seq: u64,
    /// RFC 3339, UTC.
    pub timestamp: String,
    pub event: Event,
}

/// Wire form of a record, `{seq, timestamp, kind, payload}`.
#[derive(Serialize, Deserialize)]
struct RawRecord {
    seq: u64,
    timestamp: String,
    kind: String,
    payload: Value,
}

impl TryFrom<RawRecord> for EventRecord {
    type Error = EventError;

    fn try_from(raw: RawRecord) -> Result<Self, EventError> {
        Ok(Self { seq: raw.seq, timestamp: raw.timestamp, event: Event::from_parts(&raw.kind, raw.payload)? })
    }
}

impl From<EventRecord> for RawRecord {
    fn from(r: EventRecord) -> Self {
        let kind = r.event.kind().to_string();
        let mut value = serde_json::to_value(&r.event).expect("events serialize");
        let payload = value.get_mut("payload").map(Value::take).unwrap_or(Value::Null);
        Self { seq: r.seq, timestamp: r.timestamp, kind, payload }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum EventError {
    #[error("payload does not match the {kind} schema: {message}")]
    Schema { kind: String, message: String },
    #[error("event log {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("event log is not continuous: expected seq {expected}, found {found}")]
    Gap { expected: u64, found: u64 },
    #[error("event log is corrupt at seq {seq} (line {line}): {message}")]
    Corrupt { seq: u64, line: usize, message: String },
}

/// Parse and continuity-check an NDJSON log.
pub fn parse_log(text: &str) -> Result<Vec<EventRecord>, EventError> {
    let mut out: Vec<EventRecord> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let expected = out.len() as u64 + 1;
        let record: EventRecord = serde_json::from_str(line).map_err(|e| EventError::Corrupt {
            seq: expected,
            line: i + 1,
            message: e.to_string(),
        })?;
        if record.seq != expected {
            return Err(EventError::Gap { expected, found: record.seq });
        }
        out.push(record);
    }
    Ok(out)
}

pub fn read_log(path: &Path) -> Result<Vec<EventRecord>, EventError> {
    match std::fs::read_to_string(path) {
        Ok(text) => parse_log(&text),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(Vec::new()),
        Err(source) => Err(EventError::Io { path: path.into(), source }),
    }
}

/// Writer half of the log. Each append is flushed and synced before it
/// returns.
#[derive(Debug)]
pub struct EventLog {
    path: PathBuf,
    file: File,
    next_seq: u64,
}

impl EventLog {
    /// Open (creating if needed) and return the existing records.
    pub fn open(path: &Path) -> Result<(Self, Vec<EventRecord>), EventError> {
        let io = |source| EventError::Io { path: path.into(), source };
        let records = read_log(path)?;
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir).map_err(io)?;
        }
        let file = OpenOptions::new().create(true).append(true).open(path).map_err(io)?;
        let next_seq = records.len() as u64 + 1;
        Ok((Self { path: path.into(), file, next_seq }, records))
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn next_seq(&self) -> u64 {
        self.next_seq
    }

    pub fn append(&mut self, event: Event) -> Result<EventRecord, EventError> {
        let record = EventRecord {
            seq: self.next_seq,
            timestamp: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true),
            event,
        };
        let mut line = serde_json::to_string(&record).expect("event records serialize");
        line.push('\n');
        let io = |source| EventError::Io { path: self.path.clone(), source };
        self.file.write_all(line.as_bytes()).map_err(io)?;
        self.file.flush().map_err(io)?;
        self.file.sync_data().map_err(io)?;
        self.next_seq += 1;
        Ok(record)
    }

    /// Validate a raw `(kind, payload)` pair, then append it.
    pub fn append_raw(&mut self, kind: &str, payload: Value) -> Result<EventRecord, EventError> {
        let event = Event::from_parts(kind, payload)?;
        self.append(event)
    }
}

/// Count lines without parsing, for cheap length checks.
pub fn log_len(path: &Path) -> Result<usize, EventError> {
    let file = match File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(0),
        Err(source) => return Err(EventError::Io { path: path.into(), source }),
    };
    let mut n = 0;
    for line in BufReader::new(file).lines() {
        let line = line.map_err(|source| EventError::Io { path: path.into(), source })?;
        if !line.trim().is_empty() {
            n += 1;
        }
    }
    Ok(n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn appends_number_from_one() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("events.ndjson");
        let (mut log, old) = EventLog::open(&path).unwrap();
        assert!(old.is_empty());
        let a = log.append(Event::SessionCreated { session_id: "s1".into() }).unwrap();
        let b = log.append(Event::SessionCreated { session_id: "s2".into() }).unwrap();
        assert_eq!((a.seq, b.seq), (1, 2));
        let back = read_log(&path).unwrap();
        assert_eq!(back, vec![a, b]);
    }

    #[test]
    fn invalid_payload_leaves_the_log_unchanged() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("events.ndjson");
        let (mut log, _) = EventLog::open(&path).unwrap();
        let err = log.append_raw("REPORT_REVIEWED", json!({"report_id": "r1"})).unwrap_err();
        assert!(matches!(err, EventError::Schema { .. }));
        assert!(log.append_raw("NO_SUCH_KIND", json!({})).is_err());
        assert_eq!(log_len(&path).unwrap(), 0);
        assert_eq!(log.append_raw("SESSION_CREATED", json!({"session_id": "s1"})).unwrap().seq, 1);
    }

    #[test]
    fn gaps_and_corruption_name_the_first_bad_seq() {
        let line = |seq: u64| {
            format!(r#"{{"seq":{seq},"timestamp":"t","kind":"SESSION_CREATED","payload":{{"session_id":"s{seq}"}}}}"#)
        };
        let gap = format!("{}\n{}\n{}\n", line(1), line(2), line(4));
        assert!(matches!(parse_log(&gap), Err(EventError::Gap { expected: 3, found: 4 })));
        let corrupt = format!("{}\n{{not json\n", line(1));
        assert!(matches!(parse_log(&corrupt), Err(EventError::Corrupt { seq: 2, line: 2, .. })));
        assert!(parse_log("").unwrap().is_empty());
    }
}
