//! Map-to-map difference terms between a candidate and a reference map.

use std::fmt;
use std::sync::Arc;

use super::MetricError;
use crate::worldmodel::SemanticMap;

/// The two per-object difference terms between a candidate and a reference
/// map, each averaged over the reference's objects.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeltaTerms {
    /// Mean of `|M₁(n) △ M₂(n)| / |M₂(n)|`.
    pub geometric: f64,
    /// Mean of `(|P₂(n)| − |P₁(n) ∩ P₂(n)|) / |P₂(n)|`.
    pub predicate: f64,
}

/// Maps the two difference terms to a score.
#[derive(Clone)]
pub enum Combiner {
    /// `1 − min(1, geometric)`; equals ORI against the groundtruth.
    GeometricOnly,
    /// `1 − min(1, predicate)`; equals matched-count OPI against the groundtruth.
    PredicateOnly,
    /// Mean of the two single-term scores.
    Mean,
    Custom(Arc<dyn Fn(DeltaTerms) -> f64 + Send + Sync>),
}

impl fmt::Debug for Combiner {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Combiner::GeometricOnly => f.write_str("GeometricOnly"),
            Combiner::PredicateOnly => f.write_str("PredicateOnly"),
            Combiner::Mean => f.write_str("Mean"),
            Combiner::Custom(_) => f.write_str("Custom"),
        }
    }
}

impl Combiner {
    pub fn apply(&self, t: DeltaTerms) -> f64 {
        let g = 1.0 - t.geometric.min(1.0);
        let p = 1.0 - t.predicate.min(1.0);
        match self {
            Combiner::GeometricOnly => g,
            Combiner::PredicateOnly => p,
            Combiner::Mean => (g + p) / 2.0,
            Combiner::Custom(f) => f(t),
        }
    }
}

/// Difference terms of `candidate` against `reference`. Objects are those of
/// the reference; candidate objects it does not know are ignored.
pub fn delta_terms(
    candidate: &SemanticMap,
    reference: &SemanticMap,
) -> Result<DeltaTerms, MetricError> {
    if candidate.frame != reference.frame {
        return Err(MetricError::FrameMismatch(
            candidate.frame.0.clone(),
            reference.frame.0.clone(),
        ));
    }
    let n = reference.geometry.len();
    if n == 0 {
        return Err(MetricError::EmptyWorld);
    }
    let (mut geometric, mut predicate) = (0.0, 0.0);
    for (&id, m2) in &reference.geometry {
        let sym = match candidate.geometry.get(&id) {
            Some(m1) => m1.symmetric_difference(m2).count(),
            None => m2.len(),
        };
        geometric += if m2.is_empty() {
            (sym > 0) as u8 as f64
        } else {
            sym as f64 / m2.len() as f64
        };
        let p2 = reference.predicates_of(id);
        if !p2.is_empty() {
            let matched = candidate.predicates_of(id).intersection(&p2).count();
            predicate += (p2.len() - matched) as f64 / p2.len() as f64;
        }
    }
    Ok(DeltaTerms {
        geometric: geometric / n as f64,
        predicate: predicate / n as f64,
    })
}

/// `δ(SM₁, SM₂) = f(|M₁ ⊖ M₂|, |P₁ ⊟ P₂|)` with `sm2` as the reference.
pub fn delta(
    sm1: &SemanticMap,
    sm2: &SemanticMap,
    combiner: &Combiner,
) -> Result<f64, MetricError> {
    delta_terms(sm1, sm2).map(|t| combiner.apply(t))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::{opi, ori, KnowledgeView, OpiCount};
    use crate::semknow::{LabelPolicy, SpatialKnowledge};
    use crate::simkernel::{BearingBox, DetectionEvent};
    use crate::worldmodel::{load_bundled, FrameId, Groundtruth};
    use proptest::prelude::*;

    #[test]
    fn identical_maps_score_one() {
        let w = load_bundled("small_office").unwrap().unwrap();
        let g = Groundtruth::from_world(&w);
        let t = delta_terms(&g.map, &g.map).unwrap();
        assert_eq!((t.geometric, t.predicate), (0.0, 0.0));
        for c in [
            Combiner::GeometricOnly,
            Combiner::PredicateOnly,
            Combiner::Mean,
        ] {
            assert_eq!(delta(&g.map, &g.map, &c).unwrap(), 1.0);
        }
    }

    #[test]
    fn empty_candidate_has_unit_terms() {
        let w = load_bundled("small_office").unwrap().unwrap();
        let g = Groundtruth::from_world(&w);
        let empty = SemanticMap::empty(g.map.frame.clone());
        let t = delta_terms(&empty, &g.map).unwrap();
        assert_eq!((t.geometric, t.predicate), (1.0, 1.0));
        assert_eq!(delta(&empty, &g.map, &Combiner::Mean).unwrap(), 0.0);
    }

    #[test]
    fn frames_must_agree() {
        let a = SemanticMap::empty(FrameId("map".into()));
        let b = SemanticMap::empty(FrameId("odom".into()));
        assert!(matches!(
            delta(&a, &b, &Combiner::Mean),
            Err(MetricError::FrameMismatch(..))
        ));
        assert_eq!(delta(&a, &a, &Combiner::Mean), Err(MetricError::EmptyWorld));
    }

    #[test]
    fn custom_combiners_see_both_terms() {
        let w = load_bundled("small_office").unwrap().unwrap();
        let g = Groundtruth::from_world(&w);
        let empty = SemanticMap::empty(g.map.frame.clone());
        let f = Combiner::Custom(Arc::new(|t: DeltaTerms| t.geometric * 10.0 + t.predicate));
        assert_eq!(delta(&empty, &g.map, &f).unwrap(), 11.0);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(50))]
        /// On random stores built from the kitchen world, delta against the
        /// groundtruth reproduces ORI and matched OPI.
        #[test]
        fn delta_matches_ori_and_opi(
            picks in proptest::collection::vec((0usize..35, 0u32..200, 1u32..60, 0.0f64..1.0, 0usize..40), 0..40),
        ) {
            let w = load_bundled("kitchen").unwrap().unwrap();
            let g = Groundtruth::from_world(&w);
            let leaves = w.taxonomy.leaves();
            let mut store = SpatialKnowledge::new(w.taxonomy.clone(), 0.25, LabelPolicy::MaxConfidence);
            for (k, (obj, start, len, c, label)) in picks.into_iter().enumerate() {
                let o = &w.objects[obj % w.objects.len()];
                let count = o.point_count() as u32;
                let start = start % count;
                let end = (start + len).min(count);
                let label = if label < leaves.len() { leaves[label].to_string() } else { o.class_label.clone() };
                let ev = DetectionEvent {
                    t: k as f64,
                    object_id: o.id,
                    true_class: o.class_label.clone(),
                    reported_label: label,
                    confidence: c,
                    visible_points: (start..end).collect(),
                    bbox: BearingBox { angle_min: 0.0, angle_max: 0.0, range: 1.0 },
                };
                store.integrate_detection(&ev, &o.surface_points).unwrap();
            }
            let view = KnowledgeView::from_store(&store);
            let exported = store.export_semantic_map(&w.frame);
            let geo = delta(&exported, &g.map, &Combiner::GeometricOnly).unwrap();
            let pred = delta(&exported, &g.map, &Combiner::PredicateOnly).unwrap();
            prop_assert!((geo - ori(&view, &g).unwrap()).abs() < 1e-12);
            prop_assert!((pred - opi(&view, &g, OpiCount::Matched).unwrap()).abs() < 1e-12);
        }
    }
}
