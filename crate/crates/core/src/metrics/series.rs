//! Per-run metric time series and their CSV form.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt::Write as _;

use super::MetricError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSample {
    pub t: f64,
    pub name: String,
    pub value: f64,
}

/// Time series of every metric for one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionSeries {
    pub run_id: u32,
    pub seed: u64,
    pub policy: String,
    /// Metric name → `(t, value)` with strictly increasing `t`.
    pub metrics: BTreeMap<String, Vec<(f64, f64)>>,
}

impl SessionSeries {
    pub fn new(run_id: u32, seed: u64, policy: impl Into<String>) -> Self {
        Self {
            run_id,
            seed,
            policy: policy.into(),
            metrics: BTreeMap::new(),
        }
    }

    pub fn push(&mut self, t: f64, name: &str, value: f64) -> Result<(), MetricError> {
        let samples = self.metrics.entry(name.to_string()).or_default();
        if let Some(&(last, _)) = samples.last() {
            if !(t > last) {
                return Err(MetricError::NonIncreasingTime {
                    name: name.to_string(),
                    t,
                    last,
                });
            }
        }
        samples.push((t, value));
        Ok(())
    }

    pub fn metric_names(&self) -> Vec<&str> {
        self.metrics.keys().map(String::as_str).collect()
    }

    pub fn get(&self, name: &str) -> Option<&[(f64, f64)]> {
        self.metrics.get(name).map(Vec::as_slice)
    }

    /// The last value of a metric.
    pub fn final_value(&self, name: &str) -> Option<f64> {
        self.metrics.get(name)?.last().map(|&(_, v)| v)
    }

    /// All samples ordered by `(t, name)`.
    pub fn samples(&self) -> Vec<MetricSample> {
        let mut out: Vec<MetricSample> = self
            .metrics
            .iter()
            .flat_map(|(name, s)| {
                s.iter().map(move |&(t, value)| MetricSample {
                    t,
                    name: name.clone(),
                    value,
                })
            })
            .collect();
        out.sort_by(|a, b| a.t.total_cmp(&b.t).then_with(|| a.name.cmp(&b.name)));
        out
    }

    /// `t,metric,value` with six-decimal fixed-point numbers.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("t,metric,value\n");
        for m in self.samples() {
            let _ = writeln!(s, "{:.6},{},{:.6}", m.t, m.name, m.value);
        }
        s
    }
}

/// Rounds to the precision written to CSV files.
pub fn quantize(v: f64) -> f64 {
    format!("{v:.6}").parse().expect("formatted float parses")
}
