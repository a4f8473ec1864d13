//! JSON-lines decision trace.

use std::io::{self, Write};

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum EventKind {
    Token,
    LexAccess,
    Instantiate,
    Feasible,
    Commit,
    Retain,
    Evict,
    ExpectOpen,
    ExpectSatisfied,
    ExpectReopen,
    DeadEnd,
    Recover,
    Unresolve,
    RoleReassign,
    CrossLink,
    Complete,
    Fail,
    Warn,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceEvent {
    pub seq: u64,
    pub kind: EventKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub token: Option<usize>,
    /// Keys serialize sorted, so lines are stable byte for byte.
    #[serde(default)]
    pub data: Map<String, Value>,
}

impl TraceEvent {
    pub fn get(&self, key: &str) -> Option<&Value> {
        self.data.get(key)
    }

    pub fn str(&self, key: &str) -> Option<&str> {
        self.data.get(key).and_then(Value::as_str)
    }

    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("trace events serialize")
    }
}

/// In-memory event log owned by a parse.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    events: Vec<TraceEvent>,
    #[serde(skip)]
    muted: bool,
}

impl Trace {
    pub fn new() -> Self {
        Self::default()
    }

    /// A muted trace swallows events; used for hypothetical evaluation.
    pub fn muted() -> Self {
        Trace {
            events: Vec::new(),
            muted: true,
        }
    }

    pub fn mute(&mut self) {
        self.muted = true;
    }

    pub fn emit(&mut self, kind: EventKind, token: Option<usize>, data: Value) {
        if self.muted {
            return;
        }
        let data = match data {
            Value::Object(map) => map,
            Value::Null => Map::new(),
            other => {
                let mut map = Map::new();
                map.insert("value".into(), other);
                map
            }
        };
        let seq = self.events.len() as u64;
        self.events.push(TraceEvent { seq, kind, token, data });
    }

    pub fn events(&self) -> &[TraceEvent] {
        &self.events
    }

    pub fn into_events(self) -> Vec<TraceEvent> {
        self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn count(&self, kind: EventKind) -> usize {
        self.events.iter().filter(|e| e.kind == kind).count()
    }
}

/// Destination for serialized events, one JSON object per line.
pub struct JsonLinesSink<W: Write> {
    out: W,
}

impl<W: Write> JsonLinesSink<W> {
    pub fn new(out: W) -> Self {
        JsonLinesSink { out }
    }

    pub fn emit(&mut self, event: &TraceEvent) -> io::Result<()> {
        self.out.write_all(event.to_line().as_bytes())?;
        self.out.write_all(b"\n")
    }

    pub fn emit_all<'a>(&mut self, events: impl IntoIterator<Item = &'a TraceEvent>) -> io::Result<()> {
        for e in events {
            self.emit(e)?;
        }
        self.out.flush()
    }

    pub fn into_inner(self) -> W {
        self.out
    }
}

pub fn to_jsonl(events: &[TraceEvent]) -> String {
    let mut s = String::new();
    for e in events {
        s.push_str(&e.to_line());
        s.push('\n');
    }
    s
}

pub fn parse_jsonl(text: &str) -> Result<Vec<TraceEvent>, serde_json::Error> {
    text.lines().filter(|l| !l.trim().is_empty()).map(serde_json::from_str).collect()
}
