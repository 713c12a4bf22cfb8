//! A scripted operator that knows where every object is and visits them all
//! through the same command interface a human teleoperator uses.

use std::collections::{BTreeSet, VecDeque};
use std::f64::consts::PI;

use super::events::EventLog;
use super::session::{Session, SessionOutcome};
use super::{HarnessError, SessionConfig};
use crate::explore::{reachable_from, Passable, PolicyKind, TeleopCommand};
use crate::geometry::{normalize_angle, Cell, Pose};
use crate::semknow::KnownMap;
use crate::simkernel::{camera_observe, RobotState, SensorConfig};
use crate::worldmodel::{ObjectId, ObjectInstance, WorldSpec};

/// Which views the tour collects.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TourMode {
    /// Every face of every object, in segments short enough to fit the
    /// camera cone, so that every surface point is observed.
    Complete,
    /// One close view per object from the position that maximizes the
    /// detector's expected confidence.
    BestView,
}

/// A pose to stand at (a cell center) and the point to look at.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Viewpoint {
    pub object_id: ObjectId,
    pub cell: Cell,
    pub x: f64,
    pub y: f64,
    pub look_at: (f64, f64),
}

/// Longest face segment one `Complete` viewpoint is responsible for.
const SEGMENT: f64 = 0.6;
/// Standoff distances tried for face segments, best first.
const FACE_STANDOFFS: [f64; 8] = [0.8, 0.7, 0.9, 0.6, 1.0, 0.5, 1.2, 1.4];
/// Standoffs from a corner tried by `BestView`.
const CORNER_STANDOFFS: [f64; 5] = [0.25, 0.35, 0.5, 0.7, 1.0];
/// Heading error at which a turn counts as done.
const FACING_TOLERANCE: f64 = 1e-3;
/// Sim seconds spent on one viewpoint before it is skipped.
const VIEWPOINT_TIMEOUT: f64 = 90.0;

#[derive(Debug, Clone, Copy, PartialEq)]
enum Phase {
    Travel,
    Turn,
    Dwell { until: f64 },
}

/// Turns the viewpoint list into operator commands, one tick at a time.
///
/// Travel uses `set_goal`. While the viewpoint cell is still unknown the goal
/// is the known-free cell nearest to it that the robot can reach, so the
/// tour only ever plans through space the robot has seen. Facing uses
/// `cmd_vel` rotations, followed by an explicit stop and a dwell.
#[derive(Debug, Clone)]
pub struct OracleTour {
    pending: VecDeque<Viewpoint>,
    current: Option<(Viewpoint, Phase, f64)>,
    sent_goal: Option<Cell>,
    dwell: f64,
    skipped: Vec<Viewpoint>,
    done: bool,
}

impl OracleTour {
    pub fn new(world: &WorldSpec, sensors: &SensorConfig, mode: TourMode, dwell: f64) -> Self {
        let views = plan_viewpoints(world, sensors, mode);
        Self {
            pending: order_greedy(views, (world.start.x, world.start.y)),
            current: None,
            sent_goal: None,
            dwell,
            skipped: Vec::new(),
            done: false,
        }
    }

    pub fn remaining(&self) -> usize {
        self.pending.len() + usize::from(self.current.is_some())
    }

    /// Viewpoints abandoned after timing out or becoming unreachable.
    pub fn skipped(&self) -> &[Viewpoint] {
        &self.skipped
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    /// Commands to send before the session's next tick.
    pub fn commands(&mut self, session: &Session) -> Vec<TeleopCommand> {
        let state = session.state();
        let t = state.t;
        let limits = session.config().limits;
        let dt = session.config().dt;
        loop {
            if self.current.is_none() {
                match self.pending.pop_front() {
                    Some(v) => {
                        self.current = Some((v, Phase::Travel, t));
                        self.sent_goal = None;
                    }
                    None => {
                        if self.done {
                            return Vec::new();
                        }
                        self.done = true;
                        return vec![TeleopCommand::CmdVel { v: 0.0, w: 0.0 }];
                    }
                }
            }
            let (view, phase, started) = self.current.expect("current viewpoint");
            if t - started > VIEWPOINT_TIMEOUT {
                log::debug!(
                    "oracle skips viewpoint of object {} at t = {t:.1}",
                    view.object_id
                );
                self.skip(view);
                continue;
            }
            let pose = state.pose;
            match phase {
                Phase::Travel => {
                    if pose.distance_to(view.x, view.y) < 0.5 * session.world().resolution {
                        self.current = Some((view, Phase::Turn, started));
                        continue;
                    }
                    let known = session.known();
                    let Some(robot) = known.cell_at(pose.x, pose.y) else {
                        self.skip(view);
                        continue;
                    };
                    let target_active = session.explorer().target().is_some();
                    if target_active && self.sent_goal.is_some() {
                        return Vec::new();
                    }
                    let Some(goal) = stepping_stone(known, robot, view.cell) else {
                        self.skip(view);
                        continue;
                    };
                    if goal == robot && self.sent_goal == Some(goal) {
                        self.skip(view);
                        continue;
                    }
                    self.sent_goal = Some(goal);
                    let (x, y) = goal.center(known.resolution);
                    return vec![TeleopCommand::SetGoal { x, y }];
                }
                Phase::Turn => {
                    let (lx, ly) = view.look_at;
                    let err = normalize_angle((ly - pose.y).atan2(lx - pose.x) - pose.theta);
                    if err.abs() < FACING_TOLERANCE {
                        self.current = Some((
                            view,
                            Phase::Dwell {
                                until: t + self.dwell,
                            },
                            started,
                        ));
                        return vec![TeleopCommand::CmdVel { v: 0.0, w: 0.0 }];
                    }
                    let w = (err / dt).clamp(-limits.w_max, limits.w_max);
                    return vec![TeleopCommand::CmdVel { v: 0.0, w }];
                }
                Phase::Dwell { until } => {
                    if t + 1e-9 >= until {
                        self.current = None;
                        continue;
                    }
                    return Vec::new();
                }
            }
        }
    }

    fn skip(&mut self, view: Viewpoint) {
        self.skipped.push(view);
        self.current = None;
        self.sent_goal = None;
    }
}

/// The known-free cell reachable from `robot` that is closest to `goal`;
/// `goal` itself once it is known and reachable.
fn stepping_stone(known: &KnownMap, robot: Cell, goal: Cell) -> Option<Cell> {
    let reach = reachable_from(known, robot, Passable::KnownFree);
    if reach.get(goal.index(known.width)).copied().unwrap_or(false) {
        return Some(goal);
    }
    let d2 = |c: Cell| {
        let dx = c.x as i64 - goal.x as i64;
        let dy = c.y as i64 - goal.y as i64;
        dx * dx + dy * dy
    };
    (0..reach.len())
        .filter(|&i| reach[i])
        .map(|i| Cell::from_index(i, known.width))
        .min_by_key(|&c| (d2(c), c.index(known.width)))
}

/// Orders viewpoints by repeatedly taking the nearest remaining one.
fn order_greedy(mut views: Vec<Viewpoint>, start: (f64, f64)) -> VecDeque<Viewpoint> {
    let mut out = VecDeque::with_capacity(views.len());
    let mut at = start;
    while !views.is_empty() {
        let (i, _) = views
            .iter()
            .enumerate()
            .map(|(i, v)| (i, (v.x - at.0).hypot(v.y - at.1)))
            .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)))
            .expect("non-empty");
        let v = views.remove(i);
        at = (v.x, v.y);
        out.push_back(v);
    }
    out
}

/// Point indices of `obj` the camera sees from `(x, y)` looking at `look_at`.
fn visible_from(
    world: &WorldSpec,
    sensors: &SensorConfig,
    obj: &ObjectInstance,
    x: f64,
    y: f64,
    look_at: (f64, f64),
) -> BTreeSet<u32> {
    let theta = (look_at.1 - y).atan2(look_at.0 - x);
    let state = RobotState::at(Pose::new(x, y, theta));
    camera_observe(&state, world, sensors)
        .into_iter()
        .find(|o| o.object_id == obj.id)
        .map(|o| o.visible.into_iter().collect())
        .unwrap_or_default()
}

/// Candidate standpoint snapped to a reachable free cell center.
fn standpoint(
    world: &WorldSpec,
    reachable: &[bool],
    x: f64,
    y: f64,
    look_at: (f64, f64),
    id: ObjectId,
) -> Option<Viewpoint> {
    let cell = world.cell_at(x, y)?;
    if !reachable[cell.index(world.width)] {
        return None;
    }
    let (cx, cy) = cell.center(world.resolution);
    Some(Viewpoint {
        object_id: id,
        cell,
        x: cx,
        y: cy,
        look_at,
    })
}

/// Viewpoints for every object of the world, in object order.
pub fn plan_viewpoints(
    world: &WorldSpec,
    sensors: &SensorConfig,
    mode: TourMode,
) -> Vec<Viewpoint> {
    let reachable = world.reachable_free_cells();
    let mut out = Vec::new();
    for obj in &world.objects {
        match mode {
            TourMode::Complete => out.extend(face_viewpoints(world, sensors, &reachable, obj)),
            TourMode::BestView => out.extend(best_viewpoint(world, sensors, &reachable, obj)),
        }
    }
    out
}

fn face_viewpoints(
    world: &WorldSpec,
    sensors: &SensorConfig,
    reachable: &[bool],
    obj: &ObjectInstance,
) -> Vec<Viewpoint> {
    let r = obj.footprint;
    // (start, end, outward normal) of each face.
    let faces = [
        ((r.min_x, r.min_y), (r.max_x, r.min_y), (0.0, -1.0)),
        ((r.max_x, r.min_y), (r.max_x, r.max_y), (1.0, 0.0)),
        ((r.max_x, r.max_y), (r.min_x, r.max_y), (0.0, 1.0)),
        ((r.min_x, r.max_y), (r.min_x, r.min_y), (-1.0, 0.0)),
    ];
    let mut covered = BTreeSet::new();
    let mut out = Vec::new();
    for (a, b, n) in faces {
        let len = (b.0 - a.0).hypot(b.1 - a.1);
        let segments = (len / SEGMENT - 1e-9).ceil().max(1.0) as usize;
        for k in 0..segments {
            let s0 = k as f64 / segments as f64;
            let s1 = (k + 1) as f64 / segments as f64;
            let lerp = |s: f64| (a.0 + s * (b.0 - a.0), a.1 + s * (b.1 - a.1));
            let (p0, p1) = (lerp(s0), lerp(s1));
            let mid = lerp(0.5 * (s0 + s1));
            let wanted: BTreeSet<u32> = obj
                .surface_points
                .iter()
                .filter(|p| on_segment((p.x, p.y), p0, p1))
                .map(|p| p.index)
                .collect();
            let mut best: Option<(usize, Viewpoint, BTreeSet<u32>)> = None;
            for d in FACE_STANDOFFS {
                let Some(v) = standpoint(
                    world,
                    reachable,
                    mid.0 + n.0 * d,
                    mid.1 + n.1 * d,
                    mid,
                    obj.id,
                ) else {
                    continue;
                };
                let seen = visible_from(world, sensors, obj, v.x, v.y, mid);
                let hits = wanted.intersection(&seen).count();
                if best.as_ref().is_none_or(|b| hits > b.0) {
                    best = Some((hits, v, seen));
                }
                if hits == wanted.len() {
                    break;
                }
            }
            if let Some((_, v, seen)) = best {
                covered.extend(seen);
                out.push(v);
            }
        }
    }
    if covered.len() < obj.point_count() {
        log::warn!(
            "oracle views cover {} of {} points of object {}",
            covered.len(),
            obj.point_count(),
            obj.id
        );
    }
    out
}

fn on_segment(p: (f64, f64), a: (f64, f64), b: (f64, f64)) -> bool {
    const EPS: f64 = 1e-6;
    let (min_x, max_x) = (a.0.min(b.0) - EPS, a.0.max(b.0) + EPS);
    let (min_y, max_y) = (a.1.min(b.1) - EPS, a.1.max(b.1) + EPS);
    (min_x..=max_x).contains(&p.0) && (min_y..=max_y).contains(&p.1)
}

fn best_viewpoint(
    world: &WorldSpec,
    sensors: &SensorConfig,
    reachable: &[bool],
    obj: &ObjectInstance,
) -> Option<Viewpoint> {
    let r = obj.footprint;
    let center = r.center();
    let mut best: Option<(f64, Viewpoint)> = None;
    let corners = [
        (r.max_x, r.max_y, PI / 4.0),
        (r.min_x, r.max_y, 3.0 * PI / 4.0),
        (r.min_x, r.min_y, -3.0 * PI / 4.0),
        (r.max_x, r.min_y, -PI / 4.0),
    ];
    for (cx, cy, dir) in corners {
        for d in CORNER_STANDOFFS {
            let (x, y) = (cx + d * dir.cos(), cy + d * dir.sin());
            let Some(v) = standpoint(world, reachable, x, y, center, obj.id) else {
                continue;
            };
            let fraction = visible_from(world, sensors, obj, v.x, v.y, center).len() as f64
                / obj.point_count() as f64;
            let range = (center.0 - v.x).hypot(center.1 - v.y);
            let score = fraction * (1.0 - range / sensors.cam_range).max(0.0);
            if best.as_ref().is_none_or(|b| score > b.0 + 1e-12) {
                best = Some((score, v));
            }
        }
    }
    best.map(|(_, v)| v)
}

/// Runs an external-policy session driven by an [`OracleTour`] until the
/// tour is complete or the duration runs out.
pub fn run_oracle_session(
    config: &SessionConfig,
    world: WorldSpec,
    run_id: u32,
    log: EventLog,
    mode: TourMode,
) -> Result<SessionOutcome, HarnessError> {
    if config.policy.kind != PolicyKind::External {
        return Err(HarnessError::Config(
            "the oracle tour drives an external-policy session".into(),
        ));
    }
    let dwell = match mode {
        TourMode::Complete => config.dt,
        TourMode::BestView => 1.0,
    };
    let mut tour = OracleTour::new(&world, &config.sensors, mode, dwell);
    let mut session = Session::new(config, world, run_id, log)?;
    while !session.is_finished() {
        let commands = tour.commands(&session);
        if tour.is_done() && commands.is_empty() {
            break;
        }
        session.advance(&commands)?;
    }
    if !tour.skipped().is_empty() {
        log::warn!("oracle tour skipped {} viewpoints", tour.skipped().len());
    }
    session.finish()
}
