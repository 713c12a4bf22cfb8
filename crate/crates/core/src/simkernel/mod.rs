//! The simulated platform: unicycle kinematics with collision checks, a grid
//! raycast lidar, a visibility-cone camera and a parametric object detector.
//!
//! Everything here is a pure function of its inputs plus an explicitly passed
//! RNG, so a session replays bit-identically from its seed.

mod detector;
mod sensors;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::geometry::{normalize_angle, Pose};
use crate::worldmodel::WorldSpec;

pub use detector::{detect, BearingBox, ConfidenceModel, DetectionEvent, DetectorModel};
pub use sensors::{camera_observe, lidar_scan, Beam, LidarScan, Observation, SensorConfig};

pub const DEFAULT_DT: f64 = 0.1;

/// Independent RNG streams of a session.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RngStream {
    Lidar = 1,
    Detector = 2,
    Policy = 3,
}

/// A ChaCha8 stream derived from the session seed. The generator is
/// platform-independent, which the replay guarantees rely on.
pub fn session_rng(seed: u64, stream: RngStream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream as u64);
    rng
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MotionLimits {
    pub v_max: f64,
    pub w_max: f64,
}

impl Default for MotionLimits {
    fn default() -> Self {
        Self {
            v_max: 0.5,
            w_max: 1.0,
        }
    }
}

/// Linear and angular velocity command.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Velocity {
    pub v: f64,
    pub w: f64,
}

impl Velocity {
    pub const ZERO: Velocity = Velocity { v: 0.0, w: 0.0 };

    pub fn new(v: f64, w: f64) -> Self {
        Self { v, w }
    }

    pub fn clamped(self, limits: &MotionLimits) -> Self {
        let clamp = |x: f64, m: f64| if x.is_finite() { x.clamp(-m, m) } else { 0.0 };
        Self {
            v: clamp(self.v, limits.v_max),
            w: clamp(self.w, limits.w_max),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RobotState {
    pub pose: Pose,
    pub v: f64,
    pub w: f64,
    pub t: f64,
}

impl RobotState {
    pub fn at(pose: Pose) -> Self {
        Self {
            pose,
            v: 0.0,
            w: 0.0,
            t: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    pub state: RobotState,
    pub collision: bool,
}

/// Integrates one unicycle step. A move that would end on a blocked or
/// out-of-grid cell leaves the position unchanged; heading still turns.
pub fn step(
    state: &RobotState,
    cmd: Velocity,
    dt: f64,
    world: &WorldSpec,
    limits: &MotionLimits,
) -> StepOutcome {
    debug_assert!(dt > 0.0);
    let cmd = cmd.clamped(limits);
    let Pose { x, y, theta } = state.pose;
    let nx = x + cmd.v * theta.cos() * dt;
    let ny = y + cmd.v * theta.sin() * dt;
    let collision = !world.is_free_point(nx, ny);
    let (x, y) = if collision { (x, y) } else { (nx, ny) };
    StepOutcome {
        state: RobotState {
            pose: Pose::new(x, y, normalize_angle(theta + cmd.w * dt)),
            v: cmd.v,
            w: cmd.w,
            t: state.t + dt,
        },
        collision,
    }
}
