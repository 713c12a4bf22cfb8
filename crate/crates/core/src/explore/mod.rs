//! Exploration policies: where the robot goes next and how it gets there.
//!
//! The frontier policy heads for the biggest frontier, the random policy
//! roams to uniformly drawn free cells and the external policy obeys an
//! operator. All three share the A* planner and the waypoint follower.

mod external;
mod follow;
mod planner;
mod targets;

pub use external::{
    external_command, CommandQueue, Directive, ExternalController, TeleopCommand, DEAD_MAN_TIMEOUT,
};
pub use follow::{follow_path, HEADING_TOLERANCE, SLOWDOWN_RADIUS};
pub use planner::{plan_path, plan_path_with, reachable_from, waypoints, Passable, Path};
pub use targets::{
    frontier_clusters, nearest_to_centroid, next_target_frontier, next_target_random, sample_mask,
};

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeSet, VecDeque};
use std::fmt;
use std::str::FromStr;

use crate::geometry::Cell;
use crate::semknow::{CellState, KnownMap};
use crate::simkernel::{session_rng, MotionLimits, RngStream, RobotState, Velocity};
use crate::worldmodel::WorldSpec;

#[derive(Debug, thiserror::Error, Clone, PartialEq, Eq)]
pub enum ExploreError {
    #[error("no path to cell ({}, {})", .0.x, .0.y)]
    Unreachable(Cell),
    #[error("start cell ({}, {}) is not passable", .0.x, .0.y)]
    StartBlocked(Cell),
    #[error("no reachable frontier left")]
    Exhausted,
    #[error("no known free cell to sample")]
    NoFreeSpace,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    #[default]
    Frontier,
    Random,
    External,
}

impl PolicyKind {
    pub fn as_str(self) -> &'static str {
        match self {
            PolicyKind::Frontier => "frontier",
            PolicyKind::Random => "random",
            PolicyKind::External => "external",
        }
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PolicyKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "frontier" => Ok(PolicyKind::Frontier),
            "random" => Ok(PolicyKind::Random),
            "external" => Ok(PolicyKind::External),
            other => Err(format!(
                "unknown policy {other:?} (expected frontier, random or external)"
            )),
        }
    }
}

/// Where the random policy draws its targets from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SampleSpace {
    /// Known free cells reachable through known free space.
    #[default]
    Known,
    /// Any reachable free cell of the world; paths may cross unknown cells.
    World,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RandomParams {
    pub sample_space: SampleSpace,
    pub max_tries: u32,
}

impl Default for RandomParams {
    fn default() -> Self {
        Self {
            sample_space: SampleSpace::Known,
            max_tries: 100,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PolicyConfig {
    pub kind: PolicyKind,
    /// Seconds after which the current target is reconsidered.
    pub replan_period: f64,
    /// Seconds an operator velocity command stays in force.
    pub dead_man: f64,
    /// Frontier clusters with fewer cells are ignored.
    pub min_frontier_size: usize,
    pub random: RandomParams,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        Self {
            kind: PolicyKind::Frontier,
            replan_period: 10.0,
            dead_man: DEAD_MAN_TIMEOUT,
            min_frontier_size: 8,
            random: RandomParams::default(),
        }
    }
}

/// The inputs of one policy tick.
#[derive(Debug, Clone, Copy)]
pub struct TickInput<'a> {
    pub state: &'a RobotState,
    pub known: &'a KnownMap,
    pub world: &'a WorldSpec,
    pub limits: &'a MotionLimits,
    pub dt: f64,
    /// The previous step was refused by a collision.
    pub collided: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TickOutput {
    pub cmd: Velocity,
    /// The frontier policy has nothing left to explore.
    pub exhausted: bool,
}

#[derive(Debug, Clone)]
struct Navigation {
    target: Cell,
    path: Path,
    waypoints: VecDeque<(f64, f64)>,
    planned_at: f64,
    passable: Passable,
}

/// Attempts at finding a plannable target within one tick.
const TARGET_ATTEMPTS: usize = 20;

/// A stateful exploration policy driving one robot.
#[derive(Debug, Clone)]
pub struct Explorer {
    config: PolicyConfig,
    rng: ChaCha8Rng,
    external: ExternalController,
    nav: Option<Navigation>,
    blacklist: BTreeSet<usize>,
    world_mask: Option<Vec<bool>>,
    exhausted: bool,
}

impl Explorer {
    pub fn new(config: PolicyConfig, seed: u64) -> Self {
        Self {
            config,
            rng: session_rng(seed, RngStream::Policy),
            external: ExternalController::new(config.dead_man),
            nav: None,
            blacklist: BTreeSet::new(),
            world_mask: None,
            exhausted: false,
        }
    }

    pub fn kind(&self) -> PolicyKind {
        self.config.kind
    }

    /// Feeds an operator command received at sim time `t`.
    pub fn receive(&mut self, cmd: TeleopCommand, t: f64) {
        self.external.receive(cmd, t);
    }

    pub fn target(&self) -> Option<Cell> {
        self.nav.as_ref().map(|n| n.target)
    }

    pub fn path(&self) -> Option<&Path> {
        self.nav.as_ref().map(|n| &n.path)
    }

    pub fn tick(&mut self, input: &TickInput<'_>) -> TickOutput {
        let cmd = match self.config.kind {
            PolicyKind::External => self.tick_external(input),
            PolicyKind::Frontier | PolicyKind::Random => self.tick_autonomous(input),
        };
        TickOutput {
            cmd,
            exhausted: self.exhausted,
        }
    }

    fn follow(&mut self, input: &TickInput<'_>) -> Velocity {
        match &mut self.nav {
            Some(nav) => follow_path(
                input.state,
                &mut nav.waypoints,
                input.known.resolution,
                input.limits,
                input.dt,
            ),
            None => Velocity::ZERO,
        }
    }

    fn stale(&self, input: &TickInput<'_>, nav: &Navigation) -> bool {
        let known = input.known;
        nav.waypoints.is_empty()
            || input.state.t - nav.planned_at >= self.config.replan_period - 1e-9
            || input.collided
            || (self.config.kind == PolicyKind::Frontier && !is_frontier(known, nav.target))
            || (nav.passable == Passable::NotOccupied
                && nav
                    .path
                    .cells
                    .iter()
                    .any(|&c| known.get(c) == CellState::Occupied))
    }

    fn tick_autonomous(&mut self, input: &TickInput<'_>) -> Velocity {
        if self.exhausted {
            return Velocity::ZERO;
        }
        let known = input.known;
        let pose = input.state.pose;
        let Some(robot) = known.cell_at(pose.x, pose.y) else {
            return Velocity::ZERO;
        };
        let replan = match &self.nav {
            None => true,
            Some(nav) => self.stale(input, nav),
        };
        if replan {
            let passable = match (self.config.kind, self.config.random.sample_space) {
                (PolicyKind::Random, SampleSpace::World) => Passable::NotOccupied,
                _ => Passable::KnownFree,
            };
            let mut keep = None;
            if let Some(nav) = self.nav.take() {
                if self.config.kind == PolicyKind::Frontier && is_frontier(known, nav.target) {
                    if nav.waypoints.is_empty() {
                        self.blacklist.insert(nav.target.index(known.width));
                    } else {
                        keep = Some(nav.target);
                    }
                }
            }
            if let Some(target) = keep {
                if let Ok(path) = plan_path_with(known, robot, target, passable) {
                    let wp = waypoints(known, &path, (pose.x, pose.y), passable);
                    self.nav = Some(Navigation {
                        target,
                        path,
                        waypoints: wp,
                        planned_at: input.state.t,
                        passable,
                    });
                    return self.follow(input);
                }
            }
            for _ in 0..TARGET_ATTEMPTS {
                let target = match self.pick_target(input, robot) {
                    Ok(t) => t,
                    Err(ExploreError::Exhausted) => {
                        log::debug!("frontier exhausted at t = {:.1}", input.state.t);
                        self.exhausted = true;
                        return Velocity::ZERO;
                    }
                    Err(_) => return Velocity::ZERO,
                };
                match plan_path_with(known, robot, target, passable) {
                    Ok(path) => {
                        let wp = waypoints(known, &path, (pose.x, pose.y), passable);
                        self.nav = Some(Navigation {
                            target,
                            path,
                            waypoints: wp,
                            planned_at: input.state.t,
                            passable,
                        });
                        break;
                    }
                    Err(ExploreError::Unreachable(c)) => {
                        if self.config.kind == PolicyKind::Frontier {
                            self.blacklist.insert(c.index(known.width));
                        }
                    }
                    Err(_) => return Velocity::ZERO,
                }
            }
        }
        self.follow(input)
    }

    fn pick_target(&mut self, input: &TickInput<'_>, robot: Cell) -> Result<Cell, ExploreError> {
        let known = input.known;
        match self.config.kind {
            PolicyKind::Frontier => {
                next_target_frontier(known, robot, &self.blacklist, self.config.min_frontier_size)
            }
            PolicyKind::Random => match self.config.random.sample_space {
                SampleSpace::Known => {
                    next_target_random(known, robot, &mut self.rng, self.config.random.max_tries)
                }
                SampleSpace::World => {
                    let mask = self
                        .world_mask
                        .get_or_insert_with(|| input.world.reachable_free_cells());
                    sample_mask(mask, known.width, &mut self.rng)
                }
            },
            PolicyKind::External => Err(ExploreError::NoFreeSpace),
        }
    }

    fn tick_external(&mut self, input: &TickInput<'_>) -> Velocity {
        let known = input.known;
        let pose = input.state.pose;
        match self.external.directive(input.state.t) {
            Directive::Velocity(v) => {
                self.nav = None;
                v
            }
            Directive::Idle => {
                self.nav = None;
                Velocity::ZERO
            }
            Directive::Goal { x, y } => {
                let (Some(goal), Some(robot)) =
                    (known.cell_at(x, y), known.cell_at(pose.x, pose.y))
                else {
                    log::warn!("goal ({x:.2}, {y:.2}) is outside the map");
                    self.external.clear_goal();
                    self.nav = None;
                    return Velocity::ZERO;
                };
                let replan = match &self.nav {
                    None => true,
                    Some(nav) => {
                        nav.target != goal
                            || input.state.t - nav.planned_at >= self.config.replan_period - 1e-9
                            || input.collided
                    }
                };
                if replan {
                    match plan_path(known, robot, goal) {
                        Ok(path) => {
                            let wp = waypoints(known, &path, (pose.x, pose.y), Passable::KnownFree);
                            self.nav = Some(Navigation {
                                target: goal,
                                path,
                                waypoints: wp,
                                planned_at: input.state.t,
                                passable: Passable::KnownFree,
                            });
                        }
                        Err(e) => {
                            log::warn!("dropping goal ({x:.2}, {y:.2}): {e}");
                            self.external.clear_goal();
                            self.nav = None;
                            return Velocity::ZERO;
                        }
                    }
                }
                let cmd = self.follow(input);
                if self.nav.as_ref().is_some_and(|n| n.waypoints.is_empty()) {
                    self.external.clear_goal();
                    self.nav = None;
                }
                cmd
            }
        }
    }
}

fn is_frontier(known: &KnownMap, c: Cell) -> bool {
    known.get(c) == CellState::Free
        && c.neighbors4(known.width, known.height)
            .any(|n| known.get(n) == CellState::Unknown)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Pose;
    use crate::simkernel::{lidar_scan, step, testworld::room, SensorConfig, DEFAULT_DT};

    /// Runs a policy with lidar carving until `t_end`, returning the final
    /// state, map and whether the policy reported exhaustion.
    fn drive(
        world: &WorldSpec,
        explorer: &mut Explorer,
        start: Pose,
        t_end: f64,
    ) -> (RobotState, KnownMap, bool) {
        let sensors = SensorConfig::default();
        let limits = MotionLimits::default();
        let mut known = KnownMap::unknown(world.width, world.height, world.resolution);
        let mut lidar_rng = session_rng(0, RngStream::Lidar);
        let mut s = RobotState::at(start);
        known.integrate_scan(&lidar_scan(&s, world, &sensors, &mut lidar_rng));
        let mut collided = false;
        while s.t < t_end {
            let out = explorer.tick(&TickInput {
                state: &s,
                known: &known,
                world,
                limits: &limits,
                dt: DEFAULT_DT,
                collided,
            });
            if out.exhausted {
                return (s, known, true);
            }
            let next = step(&s, out.cmd, DEFAULT_DT, world, &limits);
            collided = next.collision;
            s = next.state;
            known.integrate_scan(&lidar_scan(&s, world, &sensors, &mut lidar_rng));
        }
        (s, known, false)
    }

    #[test]
    fn frontier_policy_explores_two_rooms() {
        // Two rooms joined by a door in a wall at x = 30.
        let walls: Vec<_> = (1..39)
            .filter(|y| !(18..24).contains(y))
            .map(|y| (30, y))
            .collect();
        let w = room(60, 40, &walls, &[(1, "chair", 1.5, 1.5, 0.4, 0.4)]);
        let mut e = Explorer::new(PolicyConfig::default(), 1);
        let (_, known, exhausted) = drive(&w, &mut e, Pose::new(1.0, 3.0, 0.0), 300.0);
        assert!(exhausted);
        let reachable = w.reachable_free_cells();
        let total = reachable.iter().filter(|&&r| r).count();
        let seen = (0..reachable.len())
            .filter(|&i| reachable[i] && known.get_index(i) == CellState::Free)
            .count();
        assert!(seen as f64 >= 0.99 * total as f64, "{seen} of {total}");
    }

    #[test]
    fn random_policy_is_deterministic_and_moves() {
        let w = room(50, 40, &[], &[]);
        let config = PolicyConfig {
            kind: PolicyKind::Random,
            ..PolicyConfig::default()
        };
        let run = || {
            drive(
                &w,
                &mut Explorer::new(config, 9),
                Pose::new(2.0, 2.0, 0.0),
                30.0,
            )
            .0
        };
        let a = run();
        assert_eq!(a, run());
        assert!(a.pose.distance_to(2.0, 2.0) > 0.1);
    }

    #[test]
    fn world_sampling_random_policy_moves_without_collisions() {
        let walls: Vec<_> = (1..30).map(|y| (25, y)).collect();
        let w = room(50, 40, &walls, &[]);
        let config = PolicyConfig {
            kind: PolicyKind::Random,
            random: RandomParams {
                sample_space: SampleSpace::World,
                max_tries: 100,
            },
            ..PolicyConfig::default()
        };
        let (s, _, _) = drive(
            &w,
            &mut Explorer::new(config, 4),
            Pose::new(2.0, 2.0, 0.0),
            60.0,
        );
        assert!(s.pose.distance_to(2.0, 2.0) > 0.1);
    }

    #[test]
    fn external_goal_follows_the_planned_path() {
        let w = room(40, 30, &[], &[]);
        let mut e = Explorer::new(
            PolicyConfig {
                kind: PolicyKind::External,
                ..PolicyConfig::default()
            },
            0,
        );
        e.receive(TeleopCommand::SetGoal { x: 3.05, y: 2.05 }, 0.0);
        let sensors = SensorConfig::default();
        let limits = MotionLimits::default();
        let mut known = KnownMap::unknown(40, 30, 0.1);
        let mut rng = session_rng(0, RngStream::Lidar);
        let mut s = RobotState::at(Pose::new(1.05, 1.05, 0.0));
        known.integrate_scan(&lidar_scan(&s, &w, &sensors, &mut rng));
        let expected = plan_path(&known, Cell::new(10, 10), Cell::new(30, 20)).unwrap();
        fn input<'a>(
            s: &'a RobotState,
            known: &'a KnownMap,
            w: &'a WorldSpec,
            limits: &'a MotionLimits,
        ) -> TickInput<'a> {
            TickInput {
                state: s,
                known,
                world: w,
                limits,
                dt: DEFAULT_DT,
                collided: false,
            }
        }
        e.tick(&input(&s, &known, &w, &limits));
        assert_eq!(e.path(), Some(&expected));
        for _ in 0..200 {
            let out = e.tick(&input(&s, &known, &w, &limits));
            s = step(&s, out.cmd, DEFAULT_DT, &w, &limits).state;
        }
        assert!(s.pose.distance_to(3.05, 2.05) < 0.05);
        assert_eq!(e.target(), None);
    }

    #[test]
    fn external_silence_keeps_the_robot_still() {
        let w = room(40, 30, &[], &[]);
        let mut e = Explorer::new(
            PolicyConfig {
                kind: PolicyKind::External,
                ..PolicyConfig::default()
            },
            0,
        );
        let (s, _, exhausted) = drive(&w, &mut e, Pose::new(1.05, 1.05, 0.3), 5.0);
        assert!(!exhausted);
        assert_eq!(s.pose, Pose::new(1.05, 1.05, 0.3));
    }

    #[test]
    fn policy_names_round_trip() {
        for k in [
            PolicyKind::Frontier,
            PolicyKind::Random,
            PolicyKind::External,
        ] {
            assert_eq!(k.as_str().parse::<PolicyKind>(), Ok(k));
        }
        assert!("greedy".parse::<PolicyKind>().is_err());
    }
}
