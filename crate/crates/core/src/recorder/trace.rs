//! High-level message trace: one JSON object per line.
//!
//! ```text
//! {"timestamp":73400,"type":"Open","SourceEntity":{"name":"Button1","type":"DoorButton"},"TargetEntity":{"name":"Door1","type":"Door"}}
//! ```
//!
//! `timestamp` carries the simulation tick. Records without a target omit the
//! `TargetEntity` key.

use serde::{Deserialize, Serialize};

use super::RecorderError;
use crate::entity::{EntityRef, Message};

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TraceRecord {
    pub timestamp: u64,
    #[serde(rename = "type")]
    pub mtype: String,
    #[serde(rename = "SourceEntity")]
    pub source: EntityRef,
    #[serde(rename = "TargetEntity", default, skip_serializing_if = "Option::is_none")]
    pub target: Option<EntityRef>,
}

impl TraceRecord {
    pub fn target_name(&self) -> Option<&str> {
        self.target.as_ref().map(|t| t.name.as_str())
    }

    /// `(type, source name, target name)`, the identity used for matching.
    pub fn key(&self) -> (&str, &str, Option<&str>) {
        (&self.mtype, &self.source.name, self.target_name())
    }
}

impl From<&Message> for TraceRecord {
    fn from(m: &Message) -> Self {
        TraceRecord {
            timestamp: m.tick,
            mtype: m.mtype.clone(),
            source: m.source.clone(),
            target: m.target.clone(),
        }
    }
}

pub fn write_trace_record(msg: &Message) -> String {
    record_to_line(&TraceRecord::from(msg))
}

pub fn record_to_line(rec: &TraceRecord) -> String {
    serde_json::to_string(rec).expect("trace records always serialize")
}

pub fn parse_trace_line(line: &str, line_no: usize) -> Result<TraceRecord, RecorderError> {
    serde_json::from_str(line).map_err(|e| RecorderError::TraceParse {
        line: line_no,
        msg: e.to_string(),
    })
}

/// Parses a whole trace. Blank lines are skipped; timestamps must not decrease.
pub fn parse_trace(text: &str) -> Result<Vec<TraceRecord>, RecorderError> {
    let mut out: Vec<TraceRecord> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec = parse_trace_line(line, i + 1)?;
        if let Some(prev) = out.last() {
            if rec.timestamp < prev.timestamp {
                return Err(RecorderError::TraceParse {
                    line: i + 1,
                    msg: format!("timestamp {} after {}", rec.timestamp, prev.timestamp),
                });
            }
        }
        out.push(rec);
    }
    Ok(out)
}

pub fn write_trace(records: &[TraceRecord]) -> String {
    let mut s = String::new();
    for r in records {
        s.push_str(&record_to_line(r));
        s.push('\n');
    }
    s
}
