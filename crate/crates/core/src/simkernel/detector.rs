//! Parametric object detector with confidence noise and mislabels.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{Observation, RobotState, SensorConfig};
use crate::worldmodel::{ObjectId, WorldSpec};

/// How raw confidence is derived before noise.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConfidenceModel {
    /// `c_base · visible_fraction · (1 − d / cam_range)`.
    #[default]
    Attenuated,
    /// `c_base`, independent of view geometry. With `c_base = 1` and no
    /// noise this is an ideal detector.
    Constant,
}

/// Parametric stand-in for a learned object detector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectorModel {
    pub c_base: f64,
    pub noise_sigma: f64,
    pub p_mislabel: f64,
    pub emission_floor: f64,
    pub confidence_model: ConfidenceModel,
}

impl Default for DetectorModel {
    fn default() -> Self {
        Self {
            c_base: 0.9,
            noise_sigma: 0.05,
            p_mislabel: 0.05,
            emission_floor: 0.25,
            confidence_model: ConfidenceModel::Attenuated,
        }
    }
}

impl DetectorModel {
    /// Always right, always fully confident, never filtered.
    pub fn perfect() -> Self {
        Self {
            c_base: 1.0,
            noise_sigma: 0.0,
            p_mislabel: 0.0,
            emission_floor: 0.0,
            confidence_model: ConfidenceModel::Constant,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        let unit = |v: f64| (0.0..=1.0).contains(&v);
        if !unit(self.c_base) || !unit(self.p_mislabel) || !unit(self.emission_floor) {
            return Err("c_base, p_mislabel and emission_floor must lie in [0, 1]".into());
        }
        if !(self.noise_sigma >= 0.0) {
            return Err("detector noise_sigma must be non-negative".into());
        }
        Ok(())
    }
}

/// Angular extent and distance of a detection in the robot frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BearingBox {
    pub angle_min: f64,
    pub angle_max: f64,
    pub range: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionEvent {
    pub t: f64,
    pub object_id: ObjectId,
    pub true_class: String,
    pub reported_label: String,
    pub confidence: f64,
    /// Sorted, non-empty.
    #[serde(with = "crate::index_runs")]
    pub visible_points: Vec<u32>,
    pub bbox: BearingBox,
}

/// Turns camera observations into scored detections.
///
/// Per observation, in order, the detector draws one standard normal and one
/// uniform, plus a leaf index when the label flips. Draws happen even when
/// the event is later suppressed by the emission floor, so the stream does
/// not depend on the outcome.
pub fn detect<R: Rng + ?Sized>(
    observations: &[Observation],
    detector: &DetectorModel,
    state: &RobotState,
    world: &WorldSpec,
    sensors: &SensorConfig,
    rng: &mut R,
) -> Vec<DetectionEvent> {
    let leaves = world.taxonomy.leaves();
    let pose = state.pose;
    let mut events = Vec::with_capacity(observations.len());
    for obs in observations {
        let obj = world
            .object(obs.object_id)
            .expect("observation refers to a world object");
        let (cx, cy) = obj.footprint.center();
        let d = pose.distance_to(cx, cy);
        let fraction = obs.visible.len() as f64 / obj.point_count() as f64;
        let base = match detector.confidence_model {
            ConfidenceModel::Attenuated => {
                detector.c_base * fraction * (1.0 - d / sensors.cam_range)
            }
            ConfidenceModel::Constant => detector.c_base,
        };
        let noise = rng.sample::<f64, _>(StandardNormal);
        let confidence = (base + detector.noise_sigma * noise).clamp(0.0, 1.0);

        let flip = rng.random::<f64>() < detector.p_mislabel;
        let others: Vec<&str> = leaves
            .iter()
            .copied()
            .filter(|l| *l != obj.class_label)
            .collect();
        let reported_label = if flip && !others.is_empty() {
            others[rng.random_range(0..others.len())].to_string()
        } else {
            obj.class_label.clone()
        };

        if confidence < detector.emission_floor {
            continue;
        }
        let (mut amin, mut amax, mut range) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY);
        for &i in &obs.visible {
            let p = &obj.surface_points[i as usize];
            let b = pose.bearing_to(p.x, p.y);
            amin = amin.min(b);
            amax = amax.max(b);
            range = range.min(pose.distance_to(p.x, p.y));
        }
        events.push(DetectionEvent {
            t: state.t,
            object_id: obj.id,
            true_class: obj.class_label.clone(),
            reported_label,
            confidence,
            visible_points: obs.visible.clone(),
            bbox: BearingBox {
                angle_min: amin,
                angle_max: amax,
                range,
            },
        });
    }
    events
}
