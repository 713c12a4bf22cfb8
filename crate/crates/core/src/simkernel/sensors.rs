//! Lidar ray casting and camera visibility.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::f64::consts::TAU;

use super::RobotState;
use crate::geometry::{GridRay, Pose};
use crate::worldmodel::{ObjectId, WorldSpec};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SensorConfig {
    pub lidar_beams: usize,
    pub lidar_fov: f64,
    pub lidar_range: f64,
    pub lidar_noise_sigma: f64,
    pub cam_fov: f64,
    pub cam_range: f64,
}

impl Default for SensorConfig {
    fn default() -> Self {
        Self {
            lidar_beams: 1081,
            lidar_fov: TAU,
            lidar_range: 10.0,
            lidar_noise_sigma: 0.0,
            cam_fov: 60f64.to_radians(),
            cam_range: 3.5,
        }
    }
}

impl SensorConfig {
    pub fn validate(&self) -> Result<(), String> {
        let in_fov = |f: f64| f > 0.0 && f <= TAU + 1e-12;
        if self.lidar_beams == 0 {
            return Err("lidar_beams must be positive".into());
        }
        if !in_fov(self.lidar_fov) || !in_fov(self.cam_fov) {
            return Err("fields of view must lie in (0, 2π]".into());
        }
        if !(self.lidar_range > 0.0 && self.cam_range > 0.0) {
            return Err("sensor ranges must be positive".into());
        }
        if !(self.lidar_noise_sigma >= 0.0) {
            return Err("lidar noise sigma must be non-negative".into());
        }
        Ok(())
    }

    /// World-frame angle of beam `k` for a robot heading `theta`.
    pub fn beam_angle(&self, theta: f64, k: usize) -> f64 {
        if self.lidar_beams == 1 {
            return theta;
        }
        theta + self.lidar_fov * (k as f64 / (self.lidar_beams - 1) as f64 - 0.5)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Beam {
    /// World-frame angle.
    pub angle: f64,
    pub range: f64,
    pub hit: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LidarScan {
    pub origin: Pose,
    pub max_range: f64,
    pub beams: Vec<Beam>,
}

impl LidarScan {
    pub fn ranges(&self) -> Vec<f64> {
        self.beams.iter().map(|b| b.range).collect()
    }

    pub fn hit_count(&self) -> usize {
        self.beams.iter().filter(|b| b.hit).count()
    }
}

/// Distance along the ray to the first blocked cell, if within `max_dist`.
fn first_hit(world: &WorldSpec, origin: (f64, f64), angle: f64, max_dist: f64) -> Option<f64> {
    GridRay::new(
        origin,
        angle,
        max_dist,
        world.resolution,
        world.width,
        world.height,
    )
    .find(|c| world.is_blocked(c.cell))
    .map(|c| c.entry)
    .filter(|&d| d <= max_dist)
}

/// Raycasts every beam against walls and object footprints. One Gaussian
/// draw per hit beam when noise is enabled.
pub fn lidar_scan<R: Rng + ?Sized>(
    state: &RobotState,
    world: &WorldSpec,
    config: &SensorConfig,
    rng: &mut R,
) -> LidarScan {
    let origin = (state.pose.x, state.pose.y);
    let beams = (0..config.lidar_beams)
        .map(|k| {
            let angle = config.beam_angle(state.pose.theta, k);
            match first_hit(world, origin, angle, config.lidar_range) {
                Some(d) => {
                    let noise = if config.lidar_noise_sigma > 0.0 {
                        config.lidar_noise_sigma * rng.sample::<f64, _>(StandardNormal)
                    } else {
                        0.0
                    };
                    Beam {
                        angle,
                        range: (d + noise).clamp(0.0, config.lidar_range),
                        hit: true,
                    }
                }
                None => Beam {
                    angle,
                    range: config.lidar_range,
                    hit: false,
                },
            }
        })
        .collect();
    LidarScan {
        origin: state.pose,
        max_range: config.lidar_range,
        beams,
    }
}

/// Surface points of one object seen by the camera at one tick.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Observation {
    pub object_id: ObjectId,
    /// Sorted surface-point indices.
    pub visible: Vec<u32>,
}

/// Visible surface points per object, in object order; objects with no
/// visible point are omitted.
///
/// A point is visible when it is inside the camera cone and range and the
/// segment from the robot reaches the point's own footprint cell without
/// first entering a wall cell or any footprint cell (the object's own
/// included).
pub fn camera_observe(
    state: &RobotState,
    world: &WorldSpec,
    config: &SensorConfig,
) -> Vec<Observation> {
    let pose = state.pose;
    let half_fov = 0.5 * config.cam_fov;
    let mut out = Vec::new();
    for obj in &world.objects {
        if obj.footprint.distance_to(pose.x, pose.y) > config.cam_range {
            continue;
        }
        let visible: Vec<u32> = obj
            .surface_points
            .iter()
            .filter(|p| {
                pose.distance_to(p.x, p.y) <= config.cam_range
                    && pose.bearing_to(p.x, p.y).abs() <= half_fov
                    && line_of_sight(
                        world,
                        &pose,
                        (p.x, p.y),
                        obj.owner_cell(p, world.resolution),
                    )
            })
            .map(|p| p.index)
            .collect();
        if !visible.is_empty() {
            out.push(Observation {
                object_id: obj.id,
                visible,
            });
        }
    }
    out
}

fn line_of_sight(
    world: &WorldSpec,
    from: &Pose,
    to: (f64, f64),
    target: crate::geometry::Cell,
) -> bool {
    const EPS: f64 = 1e-9;
    let len = from.distance_to(to.0, to.1);
    for c in GridRay::segment(
        (from.x, from.y),
        to,
        world.resolution,
        world.width,
        world.height,
    ) {
        if c.cell == target {
            return true;
        }
        if c.entry >= len - EPS {
            return true;
        }
        if world.is_blocked(c.cell) {
            return false;
        }
    }
    true
}
