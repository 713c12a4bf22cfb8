//! Named metric evaluators and the standard registry.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use super::{
    cori, opi, ori, KnowledgeView, MetricError, MetricSample, OpiCount, SessionSeries, CORI, OPI,
    ORI,
};
use crate::worldmodel::{Groundtruth, SemanticMap};

/// Everything a metric may look at: one consistent snapshot of the robot's
/// knowledge and the groundtruth.
#[derive(Debug, Clone, Copy)]
pub struct MetricInput<'a> {
    pub knowledge: &'a KnowledgeView,
    pub robot_map: &'a SemanticMap,
    pub groundtruth: &'a Groundtruth,
}

pub type Evaluator = Arc<dyn Fn(&MetricInput<'_>) -> Result<f64, MetricError> + Send + Sync>;

/// Named metric definitions, evaluated in name order.
#[derive(Clone, Default)]
pub struct MetricRegistry {
    defs: BTreeMap<String, Evaluator>,
}

impl fmt::Debug for MetricRegistry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.defs.keys()).finish()
    }
}

impl MetricRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    /// `ori`, `cori` and `opi`.
    pub fn standard(opi_count: OpiCount) -> Self {
        let mut r = Self::new();
        r.register(
            ORI,
            Arc::new(|i: &MetricInput<'_>| ori(i.knowledge, i.groundtruth)),
        )
        .expect("fresh registry");
        r.register(
            CORI,
            Arc::new(|i: &MetricInput<'_>| cori(i.knowledge, i.groundtruth)),
        )
        .expect("fresh registry");
        r.register(
            OPI,
            Arc::new(move |i: &MetricInput<'_>| opi(i.knowledge, i.groundtruth, opi_count)),
        )
        .expect("fresh registry");
        r
    }

    pub fn register(
        &mut self,
        name: impl Into<String>,
        evaluator: Evaluator,
    ) -> Result<(), MetricError> {
        let name = name.into();
        if self.defs.contains_key(&name) {
            return Err(MetricError::Duplicate(name));
        }
        self.defs.insert(name, evaluator);
        Ok(())
    }

    pub fn names(&self) -> Vec<String> {
        self.defs.keys().cloned().collect()
    }

    pub fn len(&self) -> usize {
        self.defs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.defs.is_empty()
    }

    /// Evaluates every metric; the first failure is reported with its name.
    pub fn evaluate(&self, input: &MetricInput<'_>) -> Result<Vec<(String, f64)>, MetricError> {
        self.defs
            .iter()
            .map(|(name, eval)| {
                eval(input).map(|v| (name.clone(), v)).map_err(|e| match e {
                    e @ MetricError::Evaluation { .. } => e,
                    other => MetricError::Evaluation {
                        name: name.clone(),
                        message: other.to_string(),
                    },
                })
            })
            .collect()
    }
}

/// Evaluates the registry at time `t` and appends the samples to `series`.
pub fn sample_metrics(
    registry: &MetricRegistry,
    input: &MetricInput<'_>,
    t: f64,
    series: &mut SessionSeries,
) -> Result<Vec<MetricSample>, MetricError> {
    let values = registry.evaluate(input)?;
    let mut out = Vec::with_capacity(values.len());
    for (name, value) in values {
        series.push(t, &name, value)?;
        out.push(MetricSample { t, name, value });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::tests::{gt, view};

    #[test]
    fn standard_registry_evaluates_in_name_order() {
        let g = gt(&[(100, 3), (200, 2)]);
        let v = view(&g, &[Some((50, 0.8, 1)), Some((200, 1.0, 2))]);
        let input = MetricInput {
            knowledge: &v,
            robot_map: &g.map,
            groundtruth: &g,
        };
        let r = MetricRegistry::standard(OpiCount::Matched);
        let out = r.evaluate(&input).unwrap();
        let names: Vec<_> = out.iter().map(|(n, _)| n.as_str()).collect();
        assert_eq!(names, ["cori", "opi", "ori"]);
        assert!((out[0].1 - 0.70).abs() < 1e-12);
    }

    #[test]
    fn duplicates_are_rejected_and_custom_metrics_run() {
        let mut r = MetricRegistry::standard(OpiCount::Matched);
        assert_eq!(
            r.register("ori", Arc::new(|_: &MetricInput<'_>| Ok(0.0))),
            Err(MetricError::Duplicate("ori".into()))
        );
        r.register(
            "seen_objects",
            Arc::new(|i: &MetricInput<'_>| Ok(i.knowledge.objects.len() as f64)),
        )
        .unwrap();
        assert_eq!(r.len(), 4);

        let g = gt(&[(10, 2), (10, 2)]);
        let v = view(&g, &[Some((5, 0.5, 1)), None]);
        let input = MetricInput {
            knowledge: &v,
            robot_map: &g.map,
            groundtruth: &g,
        };
        let mut series = SessionSeries::new(0, 1, "test");
        let samples = sample_metrics(&r, &input, 0.0, &mut series).unwrap();
        assert_eq!(samples.last().unwrap().value, 1.0);
        assert_eq!(
            series.metric_names(),
            ["cori", "opi", "ori", "seen_objects"]
        );
        // Pure evaluators: the same snapshot gives the same numbers.
        let again = sample_metrics(&r, &input, 1.0, &mut series).unwrap();
        assert!(samples.iter().zip(&again).all(|(a, b)| a.value == b.value));
    }

    #[test]
    fn evaluator_failures_name_the_metric() {
        let g = gt(&[]);
        let v = KnowledgeView::default();
        let input = MetricInput {
            knowledge: &v,
            robot_map: &g.map,
            groundtruth: &g,
        };
        let err = MetricRegistry::standard(OpiCount::Matched)
            .evaluate(&input)
            .unwrap_err();
        assert_eq!(
            err,
            MetricError::Evaluation {
                name: "cori".into(),
                message: "the groundtruth has no objects".into()
            }
        );
    }
}
