//! Recomputing metric series from recorded event logs.

use std::io::BufRead;
use std::path::Path;

use super::events::{EndReason, Event};
use super::{HarnessError, SessionConfig, LOG_VERSION};
use crate::metrics::{sample_metrics, KnowledgeView, MetricInput, MetricRegistry, SessionSeries};
use crate::semknow::SpatialKnowledge;
use crate::worldmodel::{parse_world, Groundtruth};

/// A replayed event log: the series recomputed from the logged detections
/// next to the series the live session recorded.
#[derive(Debug, Clone, PartialEq)]
pub struct Replay {
    pub config: SessionConfig,
    pub recomputed: SessionSeries,
    pub recorded: SessionSeries,
    pub end_reason: EndReason,
    pub end_time: f64,
}

impl Replay {
    /// Bit-exact equality of the two series.
    pub fn matches(&self) -> bool {
        self.recomputed.metrics.len() == self.recorded.metrics.len()
            && self.recomputed.metrics.iter().all(|(name, a)| {
                self.recorded.get(name).is_some_and(|b| {
                    a.len() == b.len()
                        && a.iter().zip(b).all(|(x, y)| {
                            x.0.to_bits() == y.0.to_bits() && x.1.to_bits() == y.1.to_bits()
                        })
                })
            })
    }
}

/// Parses an event log, numbering lines from 1.
pub fn read_log(path: impl AsRef<Path>) -> Result<Vec<Event>, HarnessError> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| HarnessError::io(path, e))?;
    let mut events = Vec::new();
    for (i, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| HarnessError::io(path, e))?;
        let event = serde_json::from_str(&line).map_err(|e| HarnessError::CorruptLog {
            line: i + 1,
            message: e.to_string(),
        })?;
        events.push(event);
    }
    Ok(events)
}

/// Recomputes the metric series of a session from its event log.
pub fn replay(path: impl AsRef<Path>) -> Result<SessionSeries, HarnessError> {
    replay_log(path).map(|r| r.recomputed)
}

/// Replays a log and returns both the recomputed and the recorded series.
pub fn replay_log(path: impl AsRef<Path>) -> Result<Replay, HarnessError> {
    replay_events(&read_log(path)?)
}

fn corrupt(line: usize, message: impl Into<String>) -> HarnessError {
    HarnessError::CorruptLog {
        line,
        message: message.into(),
    }
}

pub(crate) fn replay_events(events: &[Event]) -> Result<Replay, HarnessError> {
    let Some(Event::Session {
        version,
        run_id,
        seed,
        config,
        world,
        metrics,
    }) = events.first()
    else {
        return Err(corrupt(1, "missing session header"));
    };
    if version != LOG_VERSION {
        return Err(corrupt(1, format!("unsupported log version {version:?}")));
    }
    let world = parse_world(world).map_err(|e| corrupt(1, format!("embedded world: {e}")))?;
    let groundtruth = Groundtruth::from_world(&world);
    let registry = MetricRegistry::standard(config.opi.count);
    if &registry.names() != metrics {
        return Err(corrupt(
            1,
            format!("metric set {metrics:?} differs from the standard set"),
        ));
    }
    let mut store = SpatialKnowledge::new(
        world.taxonomy.clone(),
        config.knowledge.threshold,
        config.knowledge.label_policy,
    );
    let policy = config.policy.kind.as_str();
    let mut recomputed = SessionSeries::new(*run_id, *seed, policy);
    let mut recorded = SessionSeries::new(*run_id, *seed, policy);
    let mut last_t = f64::NEG_INFINITY;
    let mut end = None;

    for (i, event) in events.iter().enumerate().skip(1) {
        let line = i + 1;
        if end.is_some() {
            return Err(corrupt(line, "event after the end of the session"));
        }
        if let Some(t) = event.t() {
            if !(t >= last_t) {
                return Err(corrupt(
                    line,
                    format!("time goes backwards ({t} after {last_t})"),
                ));
            }
            last_t = t;
        }
        match event {
            Event::Session { .. } => return Err(corrupt(line, "second session header")),
            Event::Detection(d) => {
                let obj = world
                    .object(d.object_id)
                    .ok_or_else(|| corrupt(line, format!("unknown object {}", d.object_id)))?;
                store
                    .integrate_detection(d, &obj.surface_points)
                    .map_err(|e| corrupt(line, e.to_string()))?;
            }
            Event::Sample { t, values } => {
                let view = KnowledgeView::from_store(&store);
                let robot_map = store.export_semantic_map(&world.frame);
                let input = MetricInput {
                    knowledge: &view,
                    robot_map: &robot_map,
                    groundtruth: &groundtruth,
                };
                sample_metrics(&registry, &input, *t, &mut recomputed)
                    .map_err(|e| corrupt(line, e.to_string()))?;
                for (name, value) in values {
                    recorded
                        .push(*t, name, *value)
                        .map_err(|e| corrupt(line, e.to_string()))?;
                }
            }
            Event::End { t, reason } => end = Some((*reason, *t)),
            Event::Command { .. } | Event::Pose { .. } | Event::Scan { .. } | Event::Object(_) => {}
        }
    }
    let (end_reason, end_time) =
        end.ok_or_else(|| corrupt(events.len() + 1, "log ends without an end event"))?;
    Ok(Replay {
        config: (**config).clone(),
        recomputed,
        recorded,
        end_reason,
        end_time,
    })
}
