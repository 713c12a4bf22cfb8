//! Session orchestration: wiring world, simulator, knowledge and metrics into
//! seeded runs, persisting their artifacts, replaying event logs and serving
//! live sessions over WebSocket.

mod benchmark;
mod config;
mod events;
mod oracle;
mod replay;
mod serve;
mod session;

pub use benchmark::{
    aggregate, run_benchmark, run_benchmark_with, Execution, MetricAggregate, RunSummary,
    SessionReport,
};
pub use config::{KnowledgeConfig, OpiConfig, ServeConfig, SessionConfig};
pub use events::{EndReason, Event, EventLog};
pub use oracle::{plan_viewpoints, run_oracle_session, OracleTour, TourMode, Viewpoint};
pub use replay::{read_log, replay, replay_log, Replay};
pub use serve::{
    serve, ClientMessage, FrameObject, FramePose, ServerHandle, ServerMessage, WorldMeta,
};
pub use session::{sim_time, Session, SessionOutcome};

use std::path::PathBuf;

use crate::metrics::MetricError;
use crate::semknow::SemknowError;
use crate::worldmodel::WorldError;

/// Event-log format version written into every session header.
pub const LOG_VERSION: &str = "1";

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    World(#[from] WorldError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Knowledge(#[from] SemknowError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("event log write failed: {0}")]
    Log(String),
    #[error("run {run_id} failed: {source}")]
    Run {
        run_id: u32,
        source: Box<HarnessError>,
    },
    #[error("corrupt event log at line {line}: {message}")]
    CorruptLog { line: usize, message: String },
    #[error("cannot bind {addr}: {source}")]
    Bind {
        addr: String,
        source: std::io::Error,
    },
}

impl HarnessError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        HarnessError::Io {
            path: path.into(),
            source,
        }
    }
}
