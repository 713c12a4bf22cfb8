//! The `events.jsonl` session log: one JSON object per line, tagged by
//! `event`, with nondecreasing `t`.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::io::Write;

use super::{HarnessError, SessionConfig};
use crate::explore::TeleopCommand;
use crate::semknow::ObjectMessage;
use crate::simkernel::DetectionEvent;

/// Why a session stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EndReason {
    /// Sim time reached the configured duration.
    Duration,
    /// The frontier policy ran out of frontiers.
    Exhausted,
    /// Stopped from outside (server shutdown or reset).
    Stopped,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum Event {
    /// First line: everything needed to rebuild the session.
    Session {
        version: String,
        run_id: u32,
        seed: u64,
        config: Box<SessionConfig>,
        /// The world file text.
        world: String,
        metrics: Vec<String>,
    },
    Command {
        t: f64,
        command: TeleopCommand,
    },
    Pose {
        t: f64,
        x: f64,
        y: f64,
        theta: f64,
        v: f64,
        w: f64,
    },
    /// Beam summary and the known-map cells this scan revealed as
    /// `[start, length, state]` runs.
    Scan {
        t: f64,
        beams: usize,
        hits: usize,
        cells: Vec<[usize; 3]>,
    },
    Detection(DetectionEvent),
    Object(ObjectMessage),
    Sample {
        t: f64,
        values: BTreeMap<String, f64>,
    },
    End {
        t: f64,
        reason: EndReason,
    },
}

impl Event {
    pub fn t(&self) -> Option<f64> {
        match self {
            Event::Session { .. } => None,
            Event::Command { t, .. }
            | Event::Pose { t, .. }
            | Event::Scan { t, .. }
            | Event::Sample { t, .. }
            | Event::End { t, .. } => Some(*t),
            Event::Detection(d) => Some(d.t),
            Event::Object(o) => Some(o.timestamp),
        }
    }
}

/// Line-oriented event writer.
pub struct EventLog {
    out: Box<dyn Write + Send>,
}

impl std::fmt::Debug for EventLog {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("EventLog")
    }
}

impl EventLog {
    pub fn new(out: Box<dyn Write + Send>) -> Self {
        Self { out }
    }

    /// Discards everything.
    pub fn sink() -> Self {
        Self::new(Box::new(std::io::sink()))
    }

    pub fn write(&mut self, event: &Event) -> Result<(), HarnessError> {
        serde_json::to_writer(&mut self.out, event)
            .map_err(|e| HarnessError::Log(e.to_string()))?;
        self.out
            .write_all(b"\n")
            .map_err(|e| HarnessError::Log(e.to_string()))
    }

    pub fn flush(&mut self) -> Result<(), HarnessError> {
        self.out
            .flush()
            .map_err(|e| HarnessError::Log(e.to_string()))
    }
}
