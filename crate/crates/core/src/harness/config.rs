//! Session configuration, TOML loading and validation.

use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

use super::HarnessError;
use crate::explore::PolicyConfig;
use crate::metrics::OpiCount;
use crate::semknow::{LabelPolicy, DEFAULT_KNOWLEDGE_THRESHOLD};
use crate::simkernel::{DetectorModel, MotionLimits, SensorConfig, DEFAULT_DT};
use crate::worldmodel::{load_world, WorldSpec};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KnowledgeConfig {
    /// Confidence at which records start asserting predicates.
    pub threshold: f64,
    pub label_policy: LabelPolicy,
}

impl Default for KnowledgeConfig {
    fn default() -> Self {
        Self {
            threshold: DEFAULT_KNOWLEDGE_THRESHOLD,
            label_policy: LabelPolicy::MaxConfidence,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OpiConfig {
    pub count: OpiCount,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServeConfig {
    /// Sim seconds per wall second.
    pub real_time_factor: f64,
    /// State frames per sim second.
    pub frame_rate: f64,
    /// Start advancing without waiting for a client's `start`.
    pub autostart: bool,
}

impl Default for ServeConfig {
    fn default() -> Self {
        Self {
            real_time_factor: 1.0,
            frame_rate: 10.0,
            autostart: false,
        }
    }
}

/// Everything that determines a benchmark, fixed at session start.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SessionConfig {
    /// Bundled world name or world file path.
    pub world: String,
    pub policy: PolicyConfig,
    /// Seed of run 0; run `k` uses `seed + k`.
    pub seed: u64,
    pub runs: u32,
    /// Sim seconds per run.
    pub duration: f64,
    pub dt: f64,
    /// Sim seconds between metric samples; a whole multiple of `dt`.
    pub sample_period: f64,
    pub detector: DetectorModel,
    pub sensors: SensorConfig,
    pub limits: MotionLimits,
    pub knowledge: KnowledgeConfig,
    pub opi: OpiConfig,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    pub serve: ServeConfig,
}

impl Default for SessionConfig {
    fn default() -> Self {
        Self {
            world: "small_office".into(),
            policy: PolicyConfig::default(),
            seed: 0,
            runs: 5,
            duration: 300.0,
            dt: DEFAULT_DT,
            sample_period: 1.0,
            detector: DetectorModel::default(),
            sensors: SensorConfig::default(),
            limits: MotionLimits::default(),
            knowledge: KnowledgeConfig::default(),
            opi: OpiConfig::default(),
            out: None,
            serve: ServeConfig::default(),
        }
    }
}

impl SessionConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, HarnessError> {
        toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self, HarnessError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| HarnessError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml_str(&text).map_err(|e| match e {
            HarnessError::Config(m) => HarnessError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes to TOML")
    }

    pub fn ticks_per_sample(&self) -> u64 {
        (self.sample_period / self.dt).round() as u64
    }

    /// Simulation steps in a full-length run.
    pub fn total_ticks(&self) -> u64 {
        (self.duration / self.dt - 1e-9).ceil().max(0.0) as u64
    }

    /// Checks every field and loads the world.
    pub fn validate(&self) -> Result<WorldSpec, HarnessError> {
        let bad = |m: &str| Err(HarnessError::Config(m.to_string()));
        if !(self.duration >= 0.0 && self.duration.is_finite()) {
            return bad("duration must be a finite number of seconds ≥ 0");
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return bad("dt must be positive");
        }
        if self.runs == 0 {
            return bad("runs must be at least 1");
        }
        let ratio = self.sample_period / self.dt;
        if !(ratio >= 1.0 - 1e-9) || (ratio - ratio.round()).abs() > 1e-6 {
            return bad("sample_period must be a whole multiple of dt");
        }
        if !(self.policy.replan_period > 0.0) || !(self.policy.dead_man > 0.0) {
            return bad("policy replan_period and dead_man must be positive");
        }
        if !(0.0..=1.0).contains(&self.knowledge.threshold) {
            return bad("knowledge threshold must lie in [0, 1]");
        }
        if !(self.limits.v_max > 0.0 && self.limits.w_max > 0.0) {
            return bad("motion limits must be positive");
        }
        if !(self.serve.real_time_factor > 0.0 && self.serve.frame_rate > 0.0) {
            return bad("serve real_time_factor and frame_rate must be positive");
        }
        self.detector.validate().map_err(HarnessError::Config)?;
        self.sensors.validate().map_err(HarnessError::Config)?;
        let world = load_world(&self.world)?;
        if world.objects.is_empty() {
            return bad("the world has no objects to evaluate");
        }
        Ok(world)
    }
}
