//! Per-object knowledge store fed by detections.

use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};

use super::SemknowError;
use crate::simkernel::DetectionEvent;
use crate::worldmodel::{
    predicates_for, FrameId, ObjectId, Predicate, SemanticMap, SurfacePoint, Taxonomy,
};

/// Which detection's label a record keeps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelPolicy {
    /// The label of the highest-confidence detection so far.
    #[default]
    MaxConfidence,
    /// The first label that reached the knowledge threshold is never replaced.
    FirstConfident,
}

/// What the robot knows about one object.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectRecord {
    pub object_id: ObjectId,
    pub reported_label: String,
    pub best_confidence: f64,
    pub observed_points: BTreeSet<u32>,
    pub first_seen: f64,
    pub last_seen: f64,
    pub predicates: BTreeSet<Predicate>,
}

/// Message published whenever a record's knowledge changes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectMessage {
    pub object_id: ObjectId,
    pub label: String,
    /// `[label, parent, …, root]`.
    pub category_chain: Vec<String>,
    /// Mean of the observed surface points.
    pub centroid: [f64; 2],
    /// Extent of the observed surface points.
    pub bbox: [f64; 2],
    pub confidence: f64,
    pub timestamp: f64,
}

/// Incrementally built object knowledge, keyed by simulator object id.
#[derive(Debug, Clone, PartialEq)]
pub struct SpatialKnowledge {
    taxonomy: Taxonomy,
    threshold: f64,
    label_policy: LabelPolicy,
    records: BTreeMap<ObjectId, ObjectRecord>,
}

impl SpatialKnowledge {
    pub fn new(taxonomy: Taxonomy, threshold: f64, label_policy: LabelPolicy) -> Self {
        Self {
            taxonomy,
            threshold,
            label_policy,
            records: BTreeMap::new(),
        }
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    pub fn taxonomy(&self) -> &Taxonomy {
        &self.taxonomy
    }

    pub fn record(&self, id: ObjectId) -> Option<&ObjectRecord> {
        self.records.get(&id)
    }

    pub fn records(&self) -> impl Iterator<Item = &ObjectRecord> {
        self.records.values()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Folds one detection into the store.
    ///
    /// `surface` are the object's surface points (the sensor geometry behind
    /// the event's indices). Returns the object message when the record's
    /// points, confidence, label or predicates changed.
    pub fn integrate_detection(
        &mut self,
        event: &DetectionEvent,
        surface: &[SurfacePoint],
    ) -> Result<Option<ObjectMessage>, SemknowError> {
        if !self.taxonomy.contains(&event.reported_label) {
            return Err(SemknowError::UnknownClass(event.reported_label.clone()));
        }
        if event.visible_points.is_empty() {
            return Err(SemknowError::EmptyDetection(event.object_id));
        }
        if let Some(&bad) = event
            .visible_points
            .iter()
            .find(|&&i| i as usize >= surface.len())
        {
            return Err(SemknowError::PointOutOfRange {
                object_id: event.object_id,
                index: bad,
                count: surface.len(),
            });
        }

        let threshold = self.threshold;
        let policy = self.label_policy;
        let record = self
            .records
            .entry(event.object_id)
            .or_insert_with(|| ObjectRecord {
                object_id: event.object_id,
                reported_label: event.reported_label.clone(),
                best_confidence: f64::NEG_INFINITY,
                observed_points: BTreeSet::new(),
                first_seen: event.t,
                last_seen: event.t,
                predicates: BTreeSet::new(),
            });
        record.last_seen = event.t;

        let before = record.observed_points.len();
        record
            .observed_points
            .extend(event.visible_points.iter().copied());
        let mut changed = record.observed_points.len() != before;

        if event.confidence > record.best_confidence {
            let locked = policy == LabelPolicy::FirstConfident && !record.predicates.is_empty();
            if !locked {
                record.reported_label = event.reported_label.clone();
            }
            record.best_confidence = event.confidence;
            changed = true;
        }

        if record.best_confidence >= threshold {
            let predicates =
                predicates_for(record.object_id, &record.reported_label, &self.taxonomy)
                    .map_err(|_| SemknowError::UnknownClass(record.reported_label.clone()))?;
            if predicates != record.predicates {
                record.predicates = predicates;
                changed = true;
            }
        }

        if !changed {
            return Ok(None);
        }
        let record = &self.records[&event.object_id];
        Ok(Some(self.message(record, surface, event.t)))
    }

    fn message(&self, r: &ObjectRecord, surface: &[SurfacePoint], t: f64) -> ObjectMessage {
        let n = r.observed_points.len() as f64;
        let (mut sx, mut sy) = (0.0, 0.0);
        let (mut x0, mut y0, mut x1, mut y1) = (
            f64::INFINITY,
            f64::INFINITY,
            f64::NEG_INFINITY,
            f64::NEG_INFINITY,
        );
        for &i in &r.observed_points {
            let p = &surface[i as usize];
            sx += p.x;
            sy += p.y;
            x0 = x0.min(p.x);
            y0 = y0.min(p.y);
            x1 = x1.max(p.x);
            y1 = y1.max(p.y);
        }
        ObjectMessage {
            object_id: r.object_id,
            label: r.reported_label.clone(),
            category_chain: self
                .taxonomy
                .chain(&r.reported_label)
                .unwrap_or_else(|_| vec![r.reported_label.clone()]),
            centroid: [sx / n, sy / n],
            bbox: [x1 - x0, y1 - y0],
            confidence: r.best_confidence,
            timestamp: t,
        }
    }

    /// The robot's semantic map: observed point sets and asserted predicates.
    pub fn export_semantic_map(&self, frame: &FrameId) -> SemanticMap {
        let mut map = SemanticMap::empty(frame.clone());
        for r in self.records.values() {
            map.geometry.insert(r.object_id, r.observed_points.clone());
            map.predicates.extend(r.predicates.iter().cloned());
        }
        map
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Pose;
    use crate::simkernel::BearingBox;
    use crate::worldmodel::{groundtruth_map, ObjectInstance};
    use proptest::prelude::*;

    fn taxonomy() -> Taxonomy {
        Taxonomy::new([
            ("furniture", "object"),
            ("chair", "furniture"),
            ("table", "furniture"),
        ])
        .unwrap()
    }

    fn surface() -> Vec<SurfacePoint> {
        ObjectInstance::new(1, "chair", Pose::new(1.0, 1.0, 0.0), (0.6, 0.6), 50.0, 0.1)
            .unwrap()
            .surface_points
    }

    fn event(t: f64, label: &str, confidence: f64, points: std::ops::Range<u32>) -> DetectionEvent {
        DetectionEvent {
            t,
            object_id: 1,
            true_class: "chair".into(),
            reported_label: label.into(),
            confidence,
            visible_points: points.collect(),
            bbox: BearingBox {
                angle_min: 0.0,
                angle_max: 0.1,
                range: 1.0,
            },
        }
    }

    #[test]
    fn first_sighting_asserts_the_full_chain() {
        let mut k = SpatialKnowledge::new(taxonomy(), 0.25, LabelPolicy::MaxConfidence);
        let msg = k
            .integrate_detection(&event(1.0, "chair", 0.7, 0..30), &surface())
            .unwrap()
            .unwrap();
        let r = k.record(1).unwrap();
        assert_eq!(r.observed_points.len(), 30);
        assert_eq!(r.best_confidence, 0.7);
        assert_eq!(
            r.predicates,
            predicates_for(1, "chair", &taxonomy()).unwrap()
        );
        assert_eq!(msg.category_chain, vec!["chair", "furniture", "object"]);
        assert_eq!(msg.confidence, 0.7);
    }

    #[test]
    fn weaker_repeat_changes_nothing() {
        let mut k = SpatialKnowledge::new(taxonomy(), 0.25, LabelPolicy::MaxConfidence);
        k.integrate_detection(&event(1.0, "chair", 0.7, 0..30), &surface())
            .unwrap();
        let msg = k
            .integrate_detection(&event(2.0, "chair", 0.5, 0..30), &surface())
            .unwrap();
        assert!(msg.is_none());
        let r = k.record(1).unwrap();
        assert_eq!((r.observed_points.len(), r.best_confidence), (30, 0.7));
        assert_eq!(r.last_seen, 2.0);
    }

    #[test]
    fn stronger_mislabel_replaces_label_and_chain() {
        let mut k = SpatialKnowledge::new(taxonomy(), 0.25, LabelPolicy::MaxConfidence);
        k.integrate_detection(&event(1.0, "chair", 0.7, 0..30), &surface())
            .unwrap();
        let msg = k
            .integrate_detection(&event(2.0, "table", 0.9, 0..30), &surface())
            .unwrap()
            .unwrap();
        assert_eq!(msg.label, "table");
        let r = k.record(1).unwrap();
        assert_eq!(r.reported_label, "table");
        assert_eq!(
            r.predicates,
            predicates_for(1, "table", &taxonomy()).unwrap()
        );
    }

    #[test]
    fn first_confident_policy_keeps_the_first_label() {
        let mut k = SpatialKnowledge::new(taxonomy(), 0.25, LabelPolicy::FirstConfident);
        k.integrate_detection(&event(1.0, "chair", 0.7, 0..30), &surface())
            .unwrap();
        k.integrate_detection(&event(2.0, "table", 0.9, 0..30), &surface())
            .unwrap();
        let r = k.record(1).unwrap();
        assert_eq!(
            (r.reported_label.as_str(), r.best_confidence),
            ("chair", 0.9)
        );
    }

    #[test]
    fn below_threshold_records_hold_no_predicates() {
        let mut k = SpatialKnowledge::new(taxonomy(), 0.5, LabelPolicy::MaxConfidence);
        k.integrate_detection(&event(1.0, "chair", 0.3, 0..10), &surface())
            .unwrap();
        assert!(k.record(1).unwrap().predicates.is_empty());
        k.integrate_detection(&event(2.0, "chair", 0.6, 5..12), &surface())
            .unwrap();
        assert_eq!(k.record(1).unwrap().predicates.len(), 3);
        assert_eq!(k.record(1).unwrap().observed_points.len(), 12);
    }

    #[test]
    fn unknown_labels_and_foreign_points_are_rejected() {
        let mut k = SpatialKnowledge::new(taxonomy(), 0.25, LabelPolicy::MaxConfidence);
        assert!(matches!(
            k.integrate_detection(&event(1.0, "hoverboard", 0.7, 0..3), &surface()),
            Err(SemknowError::UnknownClass(_))
        ));
        assert!(matches!(
            k.integrate_detection(&event(1.0, "chair", 0.7, 118..125), &surface()),
            Err(SemknowError::PointOutOfRange { index: 120, .. })
        ));
        assert!(k.is_empty());
    }

    #[test]
    fn empty_store_exports_an_empty_map() {
        let k = SpatialKnowledge::new(taxonomy(), 0.25, LabelPolicy::MaxConfidence);
        let m = k.export_semantic_map(&FrameId("map".into()));
        assert!(m.geometry.is_empty() && m.predicates.is_empty());
    }

    #[test]
    fn full_view_exports_the_groundtruth() {
        let world =
            crate::simkernel::testworld::room(30, 30, &[], &[(1, "chair", 1.0, 1.0, 0.6, 0.6)]);
        let mut k = SpatialKnowledge::new(world.taxonomy.clone(), 0.25, LabelPolicy::MaxConfidence);
        k.integrate_detection(
            &event(1.0, "chair", 1.0, 0..120),
            &world.objects[0].surface_points,
        )
        .unwrap();
        assert_eq!(k.export_semantic_map(&world.frame), groundtruth_map(&world));
    }

    proptest! {
        /// Any permutation of the same events yields the same exported map
        /// and the same per-record confidence.
        #[test]
        fn export_is_order_independent(
            events in proptest::collection::vec((0u32..100, 1u32..20, 0.0f64..1.0, any::<bool>()), 1..20),
            seed in any::<u64>(),
        ) {
            let evs: Vec<_> = events
                .iter()
                .enumerate()
                .map(|(k, (start, len, c, flip))| {
                    let end = (start + len).min(120);
                    event(k as f64, if *flip { "table" } else { "chair" }, *c, *start..end)
                })
                .collect();
            let mut shuffled = evs.clone();
            let mut s = seed;
            for i in (1..shuffled.len()).rev() {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                shuffled.swap(i, (s >> 33) as usize % (i + 1));
            }
            let fold = |list: &[DetectionEvent]| {
                let mut k = SpatialKnowledge::new(taxonomy(), 0.25, LabelPolicy::MaxConfidence);
                for e in list {
                    k.integrate_detection(e, &surface()).unwrap();
                }
                k
            };
            let (a, b) = (fold(&evs), fold(&shuffled));
            let frame = FrameId("map".into());
            let (ra, rb) = (a.record(1).unwrap(), b.record(1).unwrap());
            prop_assert_eq!(&ra.observed_points, &rb.observed_points);
            prop_assert_eq!(ra.best_confidence, rb.best_confidence);
            // Labels agree unless two events tie on the maximum confidence.
            let max = evs.iter().map(|e| e.confidence).fold(f64::NEG_INFINITY, f64::max);
            let tied = evs.iter().filter(|e| e.confidence == max).map(|e| &e.reported_label).collect::<BTreeSet<_>>().len() > 1;
            if !tied {
                prop_assert_eq!(a.export_semantic_map(&frame), b.export_semantic_map(&frame));
            }
        }
    }
}
