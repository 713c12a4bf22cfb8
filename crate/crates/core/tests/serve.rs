//! Scripted WebSocket clients against a live server.

use serde_json::json;
use std::collections::VecDeque;
use std::net::{SocketAddr, TcpStream};
use std::time::Duration;
use tungstenite::protocol::frame::coding::CloseCode;
use tungstenite::stream::MaybeTlsStream;
use tungstenite::{Message, WebSocket};

use sembench_core::explore::{plan_path, waypoints, Passable, PolicyConfig, PolicyKind};
use sembench_core::geometry::{normalize_angle, Cell};
use sembench_core::harness::{
    plan_viewpoints, read_log, replay_log, serve, EndReason, Event, ServeConfig, ServerMessage,
    SessionConfig, TourMode,
};
use sembench_core::semknow::{CellState, KnownMap};
use sembench_core::simkernel::DetectorModel;
use sembench_core::worldmodel::WorldSpec;

struct Client {
    ws: WebSocket<MaybeTlsStream<TcpStream>>,
}

enum Received {
    Message(Box<ServerMessage>),
    Closed(Option<CloseCode>),
}

impl Client {
    fn connect(addr: SocketAddr) -> Self {
        let (ws, _) = tungstenite::connect(format!("ws://{addr}")).unwrap();
        if let MaybeTlsStream::Plain(s) = ws.get_ref() {
            s.set_read_timeout(Some(Duration::from_secs(20))).unwrap();
        }
        Self { ws }
    }

    fn send(&mut self, value: serde_json::Value) {
        self.ws.send(Message::text(value.to_string())).unwrap();
    }

    fn send_raw(&mut self, text: &str) {
        self.ws.send(Message::text(text)).unwrap();
    }

    fn receive(&mut self) -> Received {
        loop {
            match self.ws.read() {
                Ok(Message::Text(text)) => {
                    return Received::Message(Box::new(
                        serde_json::from_str(text.as_str()).unwrap(),
                    ))
                }
                Ok(Message::Close(frame)) => return Received::Closed(frame.map(|f| f.code)),
                Ok(_) => {}
                Err(tungstenite::Error::ConnectionClosed | tungstenite::Error::AlreadyClosed) => {
                    return Received::Closed(None)
                }
                Err(e) => panic!("read failed: {e}"),
            }
        }
    }

    fn message(&mut self) -> ServerMessage {
        match self.receive() {
            Received::Message(m) => *m,
            Received::Closed(code) => panic!("connection closed ({code:?})"),
        }
    }
}

/// Known-map raster rebuilt from frame deltas.
struct Raster(Vec<u8>);

impl Raster {
    fn apply(&mut self, cells: &[[usize; 3]]) {
        for &[start, len, state] in cells {
            for i in start..start + len {
                self.0[i] = state as u8;
            }
        }
    }
}

fn config(world: &str, duration: f64, out: Option<&std::path::Path>) -> SessionConfig {
    SessionConfig {
        world: world.into(),
        duration,
        policy: PolicyConfig {
            kind: PolicyKind::External,
            ..Default::default()
        },
        serve: ServeConfig {
            real_time_factor: 10.0,
            ..Default::default()
        },
        out: out.map(Into::into),
        ..Default::default()
    }
}

/// Operator script: drive to each object's best viewpoint over a map of the
/// whole world, face the object and hold still for a second.
struct Tour {
    full: KnownMap,
    resolution: f64,
    views: VecDeque<(f64, f64, (f64, f64))>,
    phase: Phase,
}

enum Phase {
    Plan,
    Travel(VecDeque<(f64, f64)>, f64),
    Face(f64),
    Dwell(f64),
    Done,
}

impl Tour {
    fn new(world: &WorldSpec, config: &SessionConfig) -> Self {
        let mut full = KnownMap::unknown(world.width, world.height, world.resolution);
        for i in 0..world.cell_count() {
            let c = Cell::from_index(i, world.width);
            full.reveal(
                c,
                if world.is_blocked(c) {
                    CellState::Occupied
                } else {
                    CellState::Free
                },
            );
        }
        let views = plan_viewpoints(world, &config.sensors, TourMode::BestView)
            .into_iter()
            .map(|v| (v.x, v.y, v.look_at))
            .collect();
        Self {
            full,
            resolution: world.resolution,
            views,
            phase: Phase::Plan,
        }
    }

    /// The velocity to command after a frame, as `(v, omega)`.
    fn command(&mut self, t: f64, x: f64, y: f64, theta: f64) -> Option<(f64, f64)> {
        loop {
            match &mut self.phase {
                Phase::Plan => {
                    let Some(&(vx, vy, _)) = self.views.front() else {
                        self.phase = Phase::Done;
                        return Some((0.0, 0.0));
                    };
                    let from = self.full.cell_at(x, y).unwrap();
                    let to = self.full.cell_at(vx, vy).unwrap();
                    match plan_path(&self.full, from, to) {
                        Ok(path) => {
                            let mut wp = waypoints(&self.full, &path, (x, y), Passable::KnownFree);
                            wp.push_back((vx, vy));
                            self.phase = Phase::Travel(wp, t);
                        }
                        Err(_) => {
                            self.views.pop_front();
                        }
                    }
                }
                Phase::Travel(wp, since) => {
                    if t - *since > 60.0 {
                        self.views.pop_front();
                        self.phase = Phase::Plan;
                        continue;
                    }
                    while wp.len() > 1 && (wp[0].0 - x).hypot(wp[0].1 - y) < 0.5 * self.resolution {
                        wp.pop_front();
                    }
                    let (gx, gy) = wp[0];
                    let d = (gx - x).hypot(gy - y);
                    if wp.len() == 1 && d < 0.05 {
                        self.phase = Phase::Face(t);
                        continue;
                    }
                    let err = normalize_angle((gy - y).atan2(gx - x) - theta);
                    if err.abs() > 0.3 {
                        return Some((0.0, 0.8f64.copysign(err)));
                    }
                    return Some((d.min(0.3), (1.5 * err).clamp(-0.8, 0.8)));
                }
                Phase::Face(since) => {
                    let (_, _, (lx, ly)) = self.views[0];
                    let err = normalize_angle((ly - y).atan2(lx - x) - theta);
                    if err.abs() < 0.03 || t - *since > 20.0 {
                        self.phase = Phase::Dwell(t + 1.0);
                        return Some((0.0, 0.0));
                    }
                    return Some((0.0, (2.0 * err).clamp(-0.8, 0.8)));
                }
                Phase::Dwell(until) => {
                    if t < *until {
                        return Some((0.0, 0.0));
                    }
                    self.views.pop_front();
                    self.phase = Phase::Plan;
                }
                Phase::Done => return None,
            }
        }
    }
}

#[test]
fn scripted_operator_tour_completes_the_predicates() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = config("small_office", 240.0, Some(dir.path()));
    c.detector = DetectorModel::perfect();
    c.serve.real_time_factor = 25.0;
    let world = c.validate().unwrap();
    let server = serve(&c, "127.0.0.1:0").unwrap();
    let mut client = Client::connect(server.local_addr());

    let ServerMessage::Hello(meta) = client.message() else {
        panic!("expected hello")
    };
    assert_eq!(meta.metrics, ["cori", "opi", "ori"]);
    assert_eq!((meta.width, meta.height), (world.width, world.height));
    let mut raster = Raster(vec![0; meta.width * meta.height]);
    client.send(json!({"type": "start"}));

    let mut tour = Tour::new(&world, &c);
    let mut last_metrics = None;
    let (done_reason, report) = loop {
        match client.message() {
            ServerMessage::Frame {
                t,
                pose,
                cells,
                metrics,
                objects,
                ..
            } => {
                raster.apply(&cells);
                for o in &objects {
                    assert_eq!(o.chain.first(), Some(&o.label));
                }
                if let (Some(ori), Some(cori)) = (metrics.get("ori"), metrics.get("cori")) {
                    assert!(cori <= ori);
                }
                last_metrics = Some(metrics);
                if let Some((v, w)) = tour.command(t, pose.x, pose.y, pose.theta) {
                    client.send(json!({"type": "cmd_vel", "v": v, "omega": w}));
                }
            }
            ServerMessage::Done { reason, report, .. } => break (reason, report),
            ServerMessage::Hello(_) => panic!("unexpected hello"),
        }
    };
    assert_eq!(done_reason, EndReason::Duration);
    assert!(
        matches!(tour.phase, Phase::Done),
        "tour unfinished at the end of the session"
    );
    assert_eq!(last_metrics.unwrap()["opi"], 1.0);
    let report = report.expect("artifacts persisted");
    assert!(report.exists());
    let summary = server.join().unwrap();
    assert_eq!(summary.final_values["opi"], [1.0]);

    let log = dir.path().join("run_00/events.jsonl");
    assert!(replay_log(&log).unwrap().matches());
    assert!(dir.path().join("run_00/metrics.csv").exists());

    let mut logged = vec![0u8; world.cell_count()];
    for event in read_log(&log).unwrap() {
        if let Event::Scan { cells, .. } = event {
            for [start, len, state] in cells {
                logged[start..start + len].fill(state as u8);
            }
        }
    }
    assert!(
        raster.0 == logged,
        "client raster differs from the robot's known map"
    );
}

#[test]
fn silent_client_sees_a_stationary_robot() {
    let c = config("small_office", 3.0, None);
    let world = c.validate().unwrap();
    let server = serve(&c, "127.0.0.1:0").unwrap();
    let mut client = Client::connect(server.local_addr());
    assert!(matches!(client.message(), ServerMessage::Hello(_)));
    match client.message() {
        ServerMessage::Frame { t, running, .. } => {
            assert_eq!(t, 0.0);
            assert!(!running);
        }
        other => panic!("expected a catch-up frame, got {other:?}"),
    }
    client.send(json!({"type": "start"}));
    let mut frames = 0;
    loop {
        match client.message() {
            ServerMessage::Frame { pose, metrics, .. } => {
                frames += 1;
                assert_eq!(
                    (pose.x, pose.y, pose.theta),
                    (world.start.x, world.start.y, world.start.theta)
                );
                assert!(metrics.values().all(|&v| v == 0.0));
            }
            ServerMessage::Done { t, reason, report } => {
                assert_eq!((t, reason, report), (3.0, EndReason::Duration, None));
                break;
            }
            ServerMessage::Hello(_) => panic!("unexpected hello"),
        }
    }
    assert!(frames >= 30);
    assert!(matches!(client.receive(), Received::Closed(_)));
    assert_eq!(server.join().unwrap().runs.len(), 1);
}

#[test]
fn protocol_violations_only_close_the_offender() {
    let c = config("small_office", 2.0, None);
    let server = serve(&c, "127.0.0.1:0").unwrap();
    let mut good = Client::connect(server.local_addr());
    let mut bad = Client::connect(server.local_addr());
    assert!(matches!(good.message(), ServerMessage::Hello(_)));
    assert!(matches!(bad.message(), ServerMessage::Hello(_)));

    bad.send_raw("this is not json");
    let code = loop {
        if let Received::Closed(code) = bad.receive() {
            break code;
        }
    };
    assert_eq!(code, Some(CloseCode::Protocol));

    good.send(json!({"type": "teleport", "x": 1.0}));
    good.send(json!({"type": "start"}));
    let reason = loop {
        if let ServerMessage::Done { reason, .. } = good.message() {
            break reason;
        }
    };
    assert_eq!(reason, EndReason::Duration);
    server.join().unwrap();
}

#[test]
fn reset_starts_the_next_run() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = config("small_office", 100.0, Some(dir.path()));
    c.serve.autostart = true;
    let server = serve(&c, "127.0.0.1:0").unwrap();
    let mut client = Client::connect(server.local_addr());
    let ServerMessage::Hello(meta) = client.message() else {
        panic!("expected hello")
    };
    assert_eq!((meta.run_id, meta.seed), (0, 0));
    loop {
        if let ServerMessage::Frame { t, .. } = client.message() {
            if t >= 1.0 {
                break;
            }
        }
    }
    client.send(json!({"type": "reset"}));
    let meta = loop {
        if let ServerMessage::Hello(meta) = client.message() {
            break meta;
        }
    };
    assert_eq!((meta.run_id, meta.seed), (1, 1));
    match client.message() {
        ServerMessage::Frame { t, .. } => assert_eq!(t, 0.0),
        other => panic!("expected a catch-up frame, got {other:?}"),
    }
    server.shutdown();
    while let Received::Message(m) = client.receive() {
        if let ServerMessage::Done { reason, .. } = *m {
            assert_eq!(reason, EndReason::Stopped);
        }
    }
    let report = server.join().unwrap();
    let reasons: Vec<EndReason> = report.runs.iter().map(|r| r.end_reason).collect();
    assert_eq!(reasons, [EndReason::Stopped, EndReason::Stopped]);
    assert!(report.runs[0].end_time >= 1.0);
    for id in ["run_00", "run_01"] {
        assert!(replay_log(dir.path().join(id).join("events.jsonl"))
            .unwrap()
            .matches());
    }
}
