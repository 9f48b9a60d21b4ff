//! Append-only run trace, persisted as line-delimited JSON.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{ConflictKind, Dimension};

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("trace i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("trace line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("event seq {got} does not follow {last}")]
    OutOfOrder { last: u64, got: u64 },
    #[error("rectify event {seq} on unit {unit:?} has no preceding failed verification")]
    UnverifiedRectify { seq: u64, unit: Option<String> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EventKind {
    Generate,
    GateDraw,
    Verify,
    Rectify,
    Attenuate,
    ConflictDetect,
    ConflictResolve,
    Error,
}

/// Where a verification verdict came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VerifySource {
    /// The verifier model scored the output.
    Llm,
    /// The output could not be parsed; no model call was made.
    Parse,
}

fn is_false(b: &bool) -> bool {
    !*b
}

/// Kind-specific event fields. Absent fields are omitted from the JSON.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Payload {
    /// Whether this event corresponds to one provider call.
    #[serde(default, skip_serializing_if = "is_false")]
    pub call: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub u: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub w: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub triggered: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub passed: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<VerifySource>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub w_before: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub w_after: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub f: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub impact: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub w_min: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prompt_hash: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub response_hash: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub retries: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub iteration: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub method: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub kinds: Vec<ConflictKind>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub conflict_set: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub affected_set: Vec<String>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub before: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub after: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "is_false")]
    pub exhausted: bool,
    #[serde(default, skip_serializing_if = "is_false")]
    pub non_convergence: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub message: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEvent {
    pub seq: u64,
    pub kind: EventKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dimension: Option<Dimension>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub unit: Option<String>,
    #[serde(default)]
    pub payload: Payload,
}

/// Provider calls per category.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CallCounts {
    pub generation: u64,
    pub verification: u64,
    pub rectification: u64,
    pub conflict_detect: u64,
    pub conflict_resolve: u64,
}

impl CallCounts {
    pub fn total(&self) -> u64 {
        self.generation + self.verification + self.rectification + self.conflict_detect + self.conflict_resolve
    }
}

/// Ordered event log of one run.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunTrace {
    pub events: Vec<TraceEvent>,
}

impl RunTrace {
    pub fn of_kind(&self, kind: EventKind) -> impl Iterator<Item = &TraceEvent> {
        self.events.iter().filter(move |e| e.kind == kind)
    }

    pub fn count(&self, kind: EventKind) -> usize {
        self.of_kind(kind).count()
    }

    pub fn call_counts(&self) -> CallCounts {
        let mut c = CallCounts::default();
        for e in self.events.iter().filter(|e| e.payload.call) {
            match e.kind {
                EventKind::Generate => c.generation += 1,
                EventKind::Verify => c.verification += 1,
                EventKind::Rectify => c.rectification += 1,
                EventKind::ConflictDetect => c.conflict_detect += 1,
                EventKind::ConflictResolve => c.conflict_resolve += 1,
                _ => {}
            }
        }
        c
    }

    /// Checks seq ordering and that each rectification follows a failed
    /// verification of the same unit.
    pub fn validate(&self) -> Result<(), TraceError> {
        let mut last: Option<u64> = None;
        let mut pending_fail: BTreeMap<Option<&str>, bool> = BTreeMap::new();
        for e in &self.events {
            if let Some(l) = last {
                if e.seq <= l {
                    return Err(TraceError::OutOfOrder { last: l, got: e.seq });
                }
            }
            last = Some(e.seq);
            let unit = e.unit.as_deref();
            match e.kind {
                EventKind::Verify => {
                    pending_fail.insert(unit, e.payload.passed == Some(false));
                }
                EventKind::Rectify if pending_fail.insert(unit, false) != Some(true) => {
                    return Err(TraceError::UnverifiedRectify { seq: e.seq, unit: e.unit.clone() });
                }
                _ => {}
            }
        }
        Ok(())
    }

    /// Reads a JSONL trace back; seq order is enforced while loading.
    pub fn replay(path: impl AsRef<Path>) -> Result<Self, TraceError> {
        let reader = BufReader::new(File::open(path)?);
        let mut trace = RunTrace::default();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let event: TraceEvent =
                serde_json::from_str(&line).map_err(|e| TraceError::Parse { line: i + 1, message: e.to_string() })?;
            if let Some(prev) = trace.events.last() {
                if event.seq <= prev.seq {
                    return Err(TraceError::OutOfOrder { last: prev.seq, got: event.seq });
                }
            }
            trace.events.push(event);
        }
        Ok(trace)
    }
}

/// Single-writer trace: keeps events in memory and, when a sink is attached,
/// writes and flushes each one as a JSON line before returning.
#[derive(Debug, Default)]
pub struct TraceLog {
    trace: RunTrace,
    sink: Option<File>,
    next_seq: u64,
}

impl TraceLog {
    pub fn in_memory() -> Self {
        Self::default()
    }

    /// Creates (truncating) a JSONL sink at `path`.
    pub fn to_file(path: impl AsRef<Path>) -> Result<Self, TraceError> {
        let file = File::create(path)?;
        Ok(Self { sink: Some(file), ..Self::default() })
    }

    /// Records a new event with the next sequence number.
    pub fn record(
        &mut self,
        kind: EventKind,
        dimension: Option<Dimension>,
        unit: Option<String>,
        payload: Payload,
    ) -> Result<u64, TraceError> {
        let seq = self.next_seq;
        self.append(TraceEvent { seq, kind, dimension, unit, payload })?;
        Ok(seq)
    }

    /// Appends a fully formed event. Its seq must exceed every earlier one.
    pub fn append(&mut self, event: TraceEvent) -> Result<(), TraceError> {
        if let Some(prev) = self.trace.events.last() {
            if event.seq <= prev.seq {
                return Err(TraceError::OutOfOrder { last: prev.seq, got: event.seq });
            }
        }
        if let Some(sink) = self.sink.as_mut() {
            let mut line = serde_json::to_string(&event).expect("trace events serialize");
            line.push('\n');
            sink.write_all(line.as_bytes())?;
            sink.flush()?;
        }
        self.next_seq = event.seq + 1;
        self.trace.events.push(event);
        Ok(())
    }

    pub fn trace(&self) -> &RunTrace {
        &self.trace
    }

    pub fn into_trace(self) -> RunTrace {
        self.trace
    }
}
