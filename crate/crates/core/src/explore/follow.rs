//! Waypoint following under the robot's motion limits.

use std::collections::VecDeque;

use crate::geometry::normalize_angle;
use crate::simkernel::{MotionLimits, RobotState, Velocity};

/// Heading error above which the follower turns in place.
pub const HEADING_TOLERANCE: f64 = 0.2;
/// Distance to a waypoint inside which forward speed ramps down.
pub const SLOWDOWN_RADIUS: f64 = 0.3;

/// Rotate-then-translate waypoint follower.
///
/// Waypoints closer than half a cell are popped first. With a heading error
/// above [`HEADING_TOLERANCE`] the robot turns at full rate; otherwise it
/// drives at `v_max`, scaled down linearly inside [`SLOWDOWN_RADIUS`], while
/// steering out the remaining error. An empty list commands zero.
pub fn follow_path(
    state: &RobotState,
    waypoints: &mut VecDeque<(f64, f64)>,
    resolution: f64,
    limits: &MotionLimits,
    dt: f64,
) -> Velocity {
    let pose = state.pose;
    while let Some(&(x, y)) = waypoints.front() {
        if pose.distance_to(x, y) < 0.5 * resolution {
            waypoints.pop_front();
        } else {
            break;
        }
    }
    let Some(&(x, y)) = waypoints.front() else {
        return Velocity::ZERO;
    };
    let err = normalize_angle((y - pose.y).atan2(x - pose.x) - pose.theta);
    if err.abs() > HEADING_TOLERANCE {
        return Velocity::new(0.0, limits.w_max.copysign(err));
    }
    let d = pose.distance_to(x, y);
    Velocity::new(
        limits.v_max * (d / SLOWDOWN_RADIUS).min(1.0),
        (err / dt).clamp(-limits.w_max, limits.w_max),
    )
}
