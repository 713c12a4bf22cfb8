//! One seeded run: the fixed-step loop of policy, motion, sensing and sampling.

use rand_chacha::ChaCha8Rng;
use std::collections::BTreeMap;

use super::events::{EndReason, Event, EventLog};
use super::{HarnessError, SessionConfig, LOG_VERSION};
use crate::explore::{Explorer, TeleopCommand, TickInput};
use crate::metrics::{sample_metrics, KnowledgeView, MetricInput, MetricRegistry, SessionSeries};
use crate::semknow::{encode_cell_runs, CellState, KnownMap, ObjectMessage, SpatialKnowledge};
use crate::simkernel::{
    camera_observe, detect, lidar_scan, session_rng, LidarScan, RngStream, RobotState, Velocity,
};
use crate::worldmodel::{Groundtruth, ObjectId, WorldSpec};

/// Sim time of a tick, rounded to the nanosecond so that sample times land
/// exactly on multiples of the sample period.
pub fn sim_time(tick: u64, dt: f64) -> f64 {
    (tick as f64 * dt * 1e9).round() / 1e9
}

/// The result of a finished session.
#[derive(Debug, Clone, PartialEq)]
pub struct SessionOutcome {
    pub series: SessionSeries,
    pub end_reason: EndReason,
    pub end_time: f64,
}

/// One robot exploring one world, advanced a tick at a time.
///
/// Each tick runs policy, step, lidar, camera, detector and knowledge
/// integration in that order, then samples the metrics whenever the tick
/// lands on the sampling grid. Every intermediate result goes to the event
/// log.
#[derive(Debug)]
pub struct Session {
    config: SessionConfig,
    run_id: u32,
    seed: u64,
    world: WorldSpec,
    groundtruth: Groundtruth,
    registry: MetricRegistry,
    explorer: Explorer,
    lidar_rng: ChaCha8Rng,
    detector_rng: ChaCha8Rng,
    state: RobotState,
    known: KnownMap,
    store: SpatialKnowledge,
    series: SessionSeries,
    log: EventLog,
    tick: u64,
    ticks_per_sample: u64,
    total_ticks: u64,
    collided: bool,
    exhausted: bool,
    last_scan: Option<LidarScan>,
    cell_changes: Vec<(usize, CellState)>,
    latest: BTreeMap<String, f64>,
    objects: BTreeMap<ObjectId, ObjectMessage>,
    end: Option<(EndReason, f64)>,
}

impl Session {
    /// Starts run `run_id` (seed `config.seed + run_id`): writes the header,
    /// takes the t = 0 sample and performs the initial sensing.
    pub fn new(
        config: &SessionConfig,
        world: WorldSpec,
        run_id: u32,
        log: EventLog,
    ) -> Result<Self, HarnessError> {
        let seed = config.seed.wrapping_add(u64::from(run_id));
        let groundtruth = Groundtruth::from_world(&world);
        let registry = MetricRegistry::standard(config.opi.count);
        let store = SpatialKnowledge::new(
            world.taxonomy.clone(),
            config.knowledge.threshold,
            config.knowledge.label_policy,
        );
        let mut session = Self {
            run_id,
            seed,
            explorer: Explorer::new(config.policy, seed),
            lidar_rng: session_rng(seed, RngStream::Lidar),
            detector_rng: session_rng(seed, RngStream::Detector),
            state: RobotState::at(world.start),
            known: KnownMap::unknown(world.width, world.height, world.resolution),
            series: SessionSeries::new(run_id, seed, config.policy.kind.as_str()),
            store,
            groundtruth,
            registry,
            log,
            tick: 0,
            ticks_per_sample: config.ticks_per_sample(),
            total_ticks: config.total_ticks(),
            collided: false,
            exhausted: false,
            last_scan: None,
            cell_changes: Vec::new(),
            latest: BTreeMap::new(),
            objects: BTreeMap::new(),
            end: None,
            config: config.clone(),
            world,
        };
        session.log.write(&Event::Session {
            version: LOG_VERSION.to_string(),
            run_id,
            seed,
            config: Box::new(session.config.clone()),
            world: session.world.to_world_file(),
            metrics: session.registry.names(),
        })?;
        session.sample()?;
        if session.total_ticks == 0 {
            session.finish_with(EndReason::Duration)?;
        } else {
            session.sense()?;
        }
        Ok(session)
    }

    pub fn run_id(&self) -> u32 {
        self.run_id
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn config(&self) -> &SessionConfig {
        &self.config
    }

    pub fn world(&self) -> &WorldSpec {
        &self.world
    }

    pub fn groundtruth(&self) -> &Groundtruth {
        &self.groundtruth
    }

    pub fn t(&self) -> f64 {
        self.state.t
    }

    pub fn state(&self) -> &RobotState {
        &self.state
    }

    pub fn known(&self) -> &KnownMap {
        &self.known
    }

    pub fn store(&self) -> &SpatialKnowledge {
        &self.store
    }

    pub fn explorer(&self) -> &Explorer {
        &self.explorer
    }

    pub fn series(&self) -> &SessionSeries {
        &self.series
    }

    pub fn metric_names(&self) -> Vec<String> {
        self.registry.names()
    }

    pub fn last_scan(&self) -> Option<&LidarScan> {
        self.last_scan.as_ref()
    }

    /// The most recent value of every metric.
    pub fn latest_samples(&self) -> &BTreeMap<String, f64> {
        &self.latest
    }

    /// Known-map changes since the previous call, in order of occurrence.
    /// The latest message of every object the robot has detected.
    pub fn objects(&self) -> &BTreeMap<ObjectId, ObjectMessage> {
        &self.objects
    }

    pub fn take_cell_changes(&mut self) -> Vec<(usize, CellState)> {
        std::mem::take(&mut self.cell_changes)
    }

    pub fn end(&self) -> Option<EndReason> {
        self.end.map(|(r, _)| r)
    }

    pub fn is_finished(&self) -> bool {
        self.end.is_some()
    }

    /// Advances one tick with the operator commands received since the last
    /// one. Returns the end reason once the session is over.
    pub fn advance(
        &mut self,
        commands: &[TeleopCommand],
    ) -> Result<Option<EndReason>, HarnessError> {
        if let Some((reason, _)) = self.end {
            return Ok(Some(reason));
        }
        let t = self.state.t;
        for &command in commands {
            self.explorer.receive(command, t);
            self.log.write(&Event::Command { t, command })?;
        }
        let out = self.explorer.tick(&TickInput {
            state: &self.state,
            known: &self.known,
            world: &self.world,
            limits: &self.config.limits,
            dt: self.config.dt,
            collided: self.collided,
        });
        self.exhausted |= out.exhausted;
        let cmd = if self.exhausted {
            Velocity::ZERO
        } else {
            out.cmd
        };
        let next = crate::simkernel::step(
            &self.state,
            cmd,
            self.config.dt,
            &self.world,
            &self.config.limits,
        );
        self.tick += 1;
        self.collided = next.collision;
        self.state = next.state;
        self.state.t = sim_time(self.tick, self.config.dt);
        let p = self.state.pose;
        self.log.write(&Event::Pose {
            t: self.state.t,
            x: p.x,
            y: p.y,
            theta: p.theta,
            v: self.state.v,
            w: self.state.w,
        })?;
        self.sense()?;

        let on_grid = self.tick.is_multiple_of(self.ticks_per_sample);
        if on_grid {
            self.sample()?;
            if self.exhausted {
                self.finish_with(EndReason::Exhausted)?;
            }
        }
        if self.end.is_none() && self.tick >= self.total_ticks {
            if !on_grid {
                self.sample()?;
            }
            self.finish_with(EndReason::Duration)?;
        }
        Ok(self.end())
    }

    /// Runs without operator input until the session ends.
    pub fn run_to_end(mut self) -> Result<SessionOutcome, HarnessError> {
        while !self.is_finished() {
            self.advance(&[])?;
        }
        self.finish()
    }

    /// Ends the session now, sampling the current state first when it is
    /// not on the grid.
    pub fn stop(&mut self) -> Result<(), HarnessError> {
        if self.end.is_some() {
            return Ok(());
        }
        if !self.tick.is_multiple_of(self.ticks_per_sample) {
            self.sample()?;
        }
        self.finish_with(EndReason::Stopped)
    }

    /// Stops the session if it is still running, flushes the log and
    /// returns the outcome.
    pub fn conclude(&mut self) -> Result<SessionOutcome, HarnessError> {
        self.stop()?;
        self.log.flush()?;
        let (end_reason, end_time) = self.end.expect("stopped session has an end");
        Ok(SessionOutcome {
            series: self.series.clone(),
            end_reason,
            end_time,
        })
    }

    /// Flushes the log and hands back the series. Unfinished sessions are
    /// stopped first.
    pub fn finish(mut self) -> Result<SessionOutcome, HarnessError> {
        self.conclude()
    }

    fn finish_with(&mut self, reason: EndReason) -> Result<(), HarnessError> {
        let t = self.state.t;
        self.end = Some((reason, t));
        self.log.write(&Event::End { t, reason })?;
        self.log.flush()
    }

    fn sense(&mut self) -> Result<(), HarnessError> {
        let t = self.state.t;
        let scan = lidar_scan(
            &self.state,
            &self.world,
            &self.config.sensors,
            &mut self.lidar_rng,
        );
        let changes = self.known.integrate_scan(&scan);
        self.log.write(&Event::Scan {
            t,
            beams: scan.beams.len(),
            hits: scan.hit_count(),
            cells: encode_cell_runs(&changes),
        })?;
        self.cell_changes.extend(changes);
        self.last_scan = Some(scan);

        let observations = camera_observe(&self.state, &self.world, &self.config.sensors);
        let detections = detect(
            &observations,
            &self.config.detector,
            &self.state,
            &self.world,
            &self.config.sensors,
            &mut self.detector_rng,
        );
        for event in detections {
            let obj = self
                .world
                .object(event.object_id)
                .expect("detections refer to world objects");
            let message = self
                .store
                .integrate_detection(&event, &obj.surface_points)?;
            self.log.write(&Event::Detection(event))?;
            if let Some(message) = message {
                self.log.write(&Event::Object(message.clone()))?;
                self.objects.insert(message.object_id, message);
            }
        }
        Ok(())
    }

    fn sample(&mut self) -> Result<(), HarnessError> {
        let t = self.state.t;
        let view = KnowledgeView::from_store(&self.store);
        let robot_map = self.store.export_semantic_map(&self.world.frame);
        let input = MetricInput {
            knowledge: &view,
            robot_map: &robot_map,
            groundtruth: &self.groundtruth,
        };
        let samples = sample_metrics(&self.registry, &input, t, &mut self.series)?;
        let values: BTreeMap<String, f64> =
            samples.into_iter().map(|s| (s.name, s.value)).collect();
        self.latest = values.clone();
        self.log.write(&Event::Sample { t, values })
    }
}
