use proptest::prelude::*;

use sembench_core::explore::{PolicyConfig, PolicyKind, TeleopCommand};
use sembench_core::harness::{
    replay_log, run_benchmark_with, EventLog, Execution, Session, SessionConfig,
};
use sembench_core::metrics::{KnowledgeView, MetricInput, MetricRegistry, OpiCount};
use sembench_core::semknow::{LabelPolicy, SpatialKnowledge};
use sembench_core::simkernel::{BearingBox, DetectionEvent};
use sembench_core::worldmodel::{load_bundled, Groundtruth, WorldSpec};

fn small_office() -> WorldSpec {
    load_bundled("small_office").unwrap().unwrap()
}

fn config(kind: PolicyKind, seed: u64, duration: f64) -> SessionConfig {
    SessionConfig {
        policy: PolicyConfig {
            kind,
            ..Default::default()
        },
        seed,
        duration,
        ..Default::default()
    }
}

fn detection_strategy(w: &WorldSpec) -> impl Strategy<Value = Vec<(usize, Vec<u32>, f64, usize)>> {
    let objects = w.objects.len();
    let classes = w.taxonomy.leaves().len();
    prop::collection::vec(
        (
            0..objects,
            prop::collection::vec(0u32..400, 1..40),
            0.0f64..=1.0,
            0..classes + 3,
        ),
        0..60,
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn metrics_stay_bounded_and_ori_never_drops(detections in detection_strategy(&small_office())) {
        let w = small_office();
        let gt = Groundtruth::from_world(&w);
        let classes: Vec<String> = w.taxonomy.leaves().into_iter().map(str::to_string).collect();
        let registry = MetricRegistry::standard(OpiCount::Matched);
        let mut store = SpatialKnowledge::new(w.taxonomy.clone(), 0.25, LabelPolicy::MaxConfidence);
        let mut previous_ori = 0.0;
        for (i, (k, points, confidence, label)) in detections.into_iter().enumerate() {
            let obj = &w.objects[k];
            let n = obj.surface_points.len() as u32;
            let event = DetectionEvent {
                t: i as f64,
                object_id: obj.id,
                true_class: obj.class_label.clone(),
                reported_label: classes.get(label).cloned().unwrap_or_else(|| obj.class_label.clone()),
                confidence,
                visible_points: points.into_iter().map(|p| p % n).collect(),
                bbox: BearingBox { angle_min: 0.0, angle_max: 0.1, range: 1.0 },
            };
            store.integrate_detection(&event, &obj.surface_points).unwrap();
            let view = KnowledgeView::from_store(&store);
            for (id, stats) in &view.objects {
                let truth = gt.objects.iter().find(|o| o.id == *id).unwrap();
                prop_assert!(stats.ps <= truth.point_count);
            }
            let robot_map = store.export_semantic_map(&w.frame);
            let values: std::collections::BTreeMap<String, f64> = registry
                .evaluate(&MetricInput { knowledge: &view, robot_map: &robot_map, groundtruth: &gt })
                .unwrap()
                .into_iter()
                .collect();
            for v in values.values() {
                prop_assert!((0.0..=1.0).contains(v));
            }
            prop_assert!(values["cori"] <= values["ori"]);
            prop_assert!(values["ori"] >= previous_ori);
            previous_ori = values["ori"];
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn teleoperated_sessions_replay_exactly(
        seed in 0u64..1000,
        commands in prop::collection::vec((-0.5f64..1.0, -1.5f64..1.5, 1usize..40), 1..12),
    ) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("events.jsonl");
        let cfg = config(PolicyKind::External, seed, 30.0);
        let log = EventLog::new(Box::new(std::fs::File::create(&path).unwrap()));
        let mut session = Session::new(&cfg, cfg.validate().unwrap(), 0, log).unwrap();
        'outer: for (v, w, ticks) in commands {
            let command = [TeleopCommand::CmdVel { v, w }];
            for tick in 0..ticks {
                if session.is_finished() {
                    break 'outer;
                }
                let pending: &[TeleopCommand] = if tick == 0 { &command } else { &[] };
                session.advance(pending).unwrap();
            }
        }
        let outcome = session.finish().unwrap();
        let replay = replay_log(&path).unwrap();
        prop_assert!(replay.matches());
        prop_assert_eq!(&replay.recomputed, &outcome.series);
    }
}

#[test]
fn sequential_and_parallel_benchmarks_agree() {
    let cfg = SessionConfig {
        runs: 3,
        ..config(PolicyKind::Random, 11, 40.0)
    };
    let a = run_benchmark_with(&cfg, Execution::Sequential).unwrap();
    let b = run_benchmark_with(&cfg, Execution::Parallel).unwrap();
    assert_eq!(a.series, b.series);
    assert_eq!(a.metrics, b.metrics);
}

#[test]
fn runs_use_consecutive_seeds() {
    let cfg = SessionConfig {
        runs: 3,
        ..config(PolicyKind::Random, 100, 20.0)
    };
    let report = run_benchmark_with(&cfg, Execution::Sequential).unwrap();
    let seeds: Vec<u64> = report.runs.iter().map(|r| r.seed).collect();
    assert_eq!(seeds, vec![100, 101, 102]);
    let single = run_benchmark_with(
        &SessionConfig {
            runs: 1,
            ..config(PolicyKind::Random, 102, 20.0)
        },
        Execution::Sequential,
    )
    .unwrap();
    assert_eq!(single.series[0].get("ori"), report.series[2].get("ori"));
}

#[test]
fn frontier_sessions_sample_on_the_fixed_grid() {
    let cfg = config(PolicyKind::Frontier, 3, 25.0);
    let outcome = Session::new(&cfg, cfg.validate().unwrap(), 0, EventLog::sink())
        .unwrap()
        .run_to_end()
        .unwrap();
    for name in ["cori", "opi", "ori"] {
        let times: Vec<f64> = outcome
            .series
            .get(name)
            .unwrap()
            .iter()
            .map(|s| s.0)
            .collect();
        let expected: Vec<f64> = (0..times.len()).map(|k| k as f64).collect();
        assert_eq!(times, expected);
        assert!(times.last().copied().unwrap() <= 25.0);
    }
}
