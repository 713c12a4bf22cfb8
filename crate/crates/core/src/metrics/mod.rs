//! Evaluation metrics: ORI, cORI and OPI against the groundtruth provider,
//! the generic map-to-map `delta`, a registry of named metric definitions
//! and per-session time series.

mod delta;
mod registry;
mod series;

pub use delta::{delta, delta_terms, Combiner, DeltaTerms};
pub use registry::{sample_metrics, Evaluator, MetricInput, MetricRegistry};
pub use series::{quantize, MetricSample, SessionSeries};

use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};

use crate::semknow::SpatialKnowledge;
use crate::worldmodel::{Groundtruth, GroundtruthObject, ObjectId, Predicate};

pub const ORI: &str = "ori";
pub const CORI: &str = "cori";
pub const OPI: &str = "opi";

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum MetricError {
    #[error("the groundtruth has no objects")]
    EmptyWorld,
    #[error("semantic maps are in different frames ({0} vs {1})")]
    FrameMismatch(String, String),
    #[error("metric {0:?} is already registered")]
    Duplicate(String),
    #[error("metric {name:?} failed: {message}")]
    Evaluation { name: String, message: String },
    #[error("metric {name:?}: sample at t = {t} does not follow t = {last}")]
    NonIncreasingTime { name: String, t: f64, last: f64 },
}

/// How OPI's `p(n)` counts the predicates a record asserts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OpiCount {
    /// Only predicates that also hold in the groundtruth.
    #[default]
    Matched,
    /// Every asserted predicate, right or wrong.
    Declared,
}

/// The per-object quantities the metrics read from the robot side.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ObjectStats {
    /// `ps(n)`: number of distinct surface points observed.
    pub ps: usize,
    /// `c(n)`: best detection confidence.
    pub confidence: f64,
    /// Asserted predicates.
    pub predicates: BTreeSet<Predicate>,
}

/// Immutable snapshot of a knowledge store, keyed by object id.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct KnowledgeView {
    pub objects: BTreeMap<ObjectId, ObjectStats>,
}

impl KnowledgeView {
    pub fn from_store(store: &SpatialKnowledge) -> Self {
        let objects = store
            .records()
            .map(|r| {
                (
                    r.object_id,
                    ObjectStats {
                        ps: r.observed_points.len(),
                        confidence: r.best_confidence,
                        predicates: r.predicates.clone(),
                    },
                )
            })
            .collect();
        Self { objects }
    }

    fn stats(&self, id: ObjectId) -> Option<&ObjectStats> {
        self.objects.get(&id)
    }
}

/// `1 − min(1, mean over groundtruth objects of term(n))`.
fn score(gt: &Groundtruth, term: impl Fn(&GroundtruthObject) -> f64) -> Result<f64, MetricError> {
    let n = gt.objects.len();
    if n == 0 {
        return Err(MetricError::EmptyWorld);
    }
    let sum: f64 = gt.objects.iter().map(term).sum();
    Ok(1.0 - (sum / n as f64).min(1.0))
}

/// Object reconstruction index: how much of every object's surface has been seen.
pub fn ori(view: &KnowledgeView, gt: &Groundtruth) -> Result<f64, MetricError> {
    score(gt, |o| {
        let ps_g = o.point_count as f64;
        let ps = view.stats(o.id).map_or(0.0, |s| s.ps as f64);
        (ps_g - ps).abs() / ps_g
    })
}

/// ORI with every object's observed surface weighted by its best confidence.
pub fn cori(view: &KnowledgeView, gt: &Groundtruth) -> Result<f64, MetricError> {
    score(gt, |o| {
        let ps_g = o.point_count as f64;
        let cps = view.stats(o.id).map_or(0.0, |s| s.confidence * s.ps as f64);
        (ps_g - cps).abs() / ps_g
    })
}

/// Object predicate index: how many of every object's predicates are known.
pub fn opi(view: &KnowledgeView, gt: &Groundtruth, count: OpiCount) -> Result<f64, MetricError> {
    score(gt, |o| {
        let p_g = o.predicates.len() as f64;
        let p = view.stats(o.id).map_or(0, |s| match count {
            OpiCount::Matched => s.predicates.intersection(&o.predicates).count(),
            OpiCount::Declared => s.predicates.len(),
        }) as f64;
        (p_g - p).abs() / p_g
    })
}
