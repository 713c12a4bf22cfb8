//! Multi-run benchmarks, cross-run aggregation and artifact writing.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::io::BufWriter;
use std::path::Path;

use super::events::{EndReason, EventLog};
use super::session::{Session, SessionOutcome};
use super::{HarnessError, SessionConfig, LOG_VERSION};
use crate::metrics::{quantize, SessionSeries};
use crate::worldmodel::WorldSpec;

/// How the runs of a benchmark are scheduled. Both produce identical
/// outputs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Execution {
    Sequential,
    #[default]
    Parallel,
}

/// Cross-run statistics of one metric on the shared time grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricAggregate {
    pub t: Vec<f64>,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub run_id: u32,
    pub seed: u64,
    pub end_reason: EndReason,
    pub end_time: f64,
}

/// The outcome of a benchmark, written to `report.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionReport {
    pub config: SessionConfig,
    pub versions: BTreeMap<String, String>,
    pub runs: Vec<RunSummary>,
    pub metrics: BTreeMap<String, MetricAggregate>,
    /// Metric name → final value of each run, in run order.
    pub final_values: BTreeMap<String, Vec<f64>>,
    /// The per-run series; persisted as the per-run CSV files.
    #[serde(skip)]
    pub series: Vec<SessionSeries>,
}

impl SessionReport {
    /// Mean over runs of the final values of a metric.
    pub fn final_mean(&self, metric: &str) -> Option<f64> {
        let v = self.final_values.get(metric)?;
        Some(v.iter().sum::<f64>() / v.len() as f64)
    }
}

/// Mean and population standard deviation per metric over all series.
///
/// The grid is the union of every run's sample times; a run contributes its
/// latest sample at or before each grid time, so shorter runs hold their
/// final value. Values are taken at CSV precision, so the statistics can be
/// recomputed from the CSV files alone.
pub fn aggregate(series: &[SessionSeries]) -> BTreeMap<String, MetricAggregate> {
    let mut out = BTreeMap::new();
    let names: std::collections::BTreeSet<&str> =
        series.iter().flat_map(|s| s.metric_names()).collect();
    for name in names {
        let runs: Vec<&[(f64, f64)]> = series.iter().map(|s| s.get(name).unwrap_or(&[])).collect();
        let mut grid: Vec<f64> = runs
            .iter()
            .flat_map(|r| r.iter().map(|&(t, _)| quantize(t)))
            .collect();
        grid.sort_by(f64::total_cmp);
        grid.dedup();
        let mut agg = MetricAggregate {
            t: Vec::with_capacity(grid.len()),
            mean: Vec::with_capacity(grid.len()),
            std: Vec::with_capacity(grid.len()),
        };
        let mut cursor = vec![0usize; runs.len()];
        for &t in &grid {
            let mut values = Vec::with_capacity(runs.len());
            for (run, c) in runs.iter().zip(cursor.iter_mut()) {
                while *c + 1 < run.len() && quantize(run[*c + 1].0) <= t {
                    *c += 1;
                }
                if let Some(&(_, v)) = run.get(*c) {
                    values.push(quantize(v));
                }
            }
            let n = values.len() as f64;
            let mean = values.iter().sum::<f64>() / n;
            let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
            agg.t.push(t);
            agg.mean.push(mean);
            agg.std.push(var.sqrt());
        }
        out.insert(name.to_string(), agg);
    }
    out
}

/// Runs `config.runs` seeded sessions in parallel and writes the artifacts
/// when `config.out` is set.
pub fn run_benchmark(config: &SessionConfig) -> Result<SessionReport, HarnessError> {
    run_benchmark_with(config, Execution::Parallel)
}

/// Output layout under `out`: `run_NN/metrics.csv`, `run_NN/events.jsonl`
/// and `report.json`.
pub fn run_benchmark_with(
    config: &SessionConfig,
    execution: Execution,
) -> Result<SessionReport, HarnessError> {
    let world = config.validate()?;
    if let Some(out) = &config.out {
        std::fs::create_dir_all(out).map_err(|e| HarnessError::io(out, e))?;
    }
    let run_one = |run_id: u32| {
        run_session(config, &world, run_id).map_err(|e| HarnessError::Run {
            run_id,
            source: Box::new(e),
        })
    };
    let outcomes: Vec<SessionOutcome> = match execution {
        Execution::Sequential => (0..config.runs).map(run_one).collect::<Result<_, _>>()?,
        Execution::Parallel => (0..config.runs)
            .into_par_iter()
            .map(run_one)
            .collect::<Result<_, _>>()?,
    };
    let report = build_report(config, outcomes);
    if let Some(out) = &config.out {
        write_report(out, &report)?;
    }
    Ok(report)
}

pub(crate) fn run_dir(out: &Path, run_id: u32) -> std::path::PathBuf {
    out.join(format!("run_{run_id:02}"))
}

fn run_session(
    config: &SessionConfig,
    world: &WorldSpec,
    run_id: u32,
) -> Result<SessionOutcome, HarnessError> {
    let Some(out) = &config.out else {
        return Session::new(config, world.clone(), run_id, EventLog::sink())?.run_to_end();
    };
    let dir = run_dir(out, run_id);
    std::fs::create_dir_all(&dir).map_err(|e| HarnessError::io(&dir, e))?;
    let log_path = dir.join("events.jsonl");
    let file = std::fs::File::create(&log_path).map_err(|e| HarnessError::io(&log_path, e))?;
    let log = EventLog::new(Box::new(BufWriter::new(file)));
    let outcome = Session::new(config, world.clone(), run_id, log)?.run_to_end()?;
    write_csv(&dir, &outcome.series)?;
    Ok(outcome)
}

pub(crate) fn write_csv(dir: &Path, series: &SessionSeries) -> Result<(), HarnessError> {
    let path = dir.join("metrics.csv");
    std::fs::write(&path, series.to_csv()).map_err(|e| HarnessError::io(&path, e))
}

pub(crate) fn build_report(config: &SessionConfig, outcomes: Vec<SessionOutcome>) -> SessionReport {
    let series: Vec<SessionSeries> = outcomes.iter().map(|o| o.series.clone()).collect();
    let mut final_values: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for s in &series {
        for name in s.metric_names() {
            final_values
                .entry(name.to_string())
                .or_default()
                .push(s.final_value(name).map_or(0.0, quantize));
        }
    }
    let versions = BTreeMap::from([
        (
            "sembench".to_string(),
            env!("CARGO_PKG_VERSION").to_string(),
        ),
        ("event_log".to_string(), LOG_VERSION.to_string()),
    ]);
    SessionReport {
        config: config.clone(),
        versions,
        runs: outcomes
            .iter()
            .map(|o| RunSummary {
                run_id: o.series.run_id,
                seed: o.series.seed,
                end_reason: o.end_reason,
                end_time: o.end_time,
            })
            .collect(),
        metrics: aggregate(&series),
        final_values,
        series,
    }
}

pub(crate) fn write_report(out: &Path, report: &SessionReport) -> Result<(), HarnessError> {
    let path = out.join("report.json");
    let mut text = serde_json::to_string_pretty(report).expect("report serializes");
    text.push('\n');
    std::fs::write(&path, text).map_err(|e| HarnessError::io(&path, e))
}
