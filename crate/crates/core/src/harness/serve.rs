//! Live sessions over WebSocket: wire messages, client handling and the session loop.

#![allow(clippy::result_large_err)]

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::io::BufWriter;
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc::{self, Receiver, SyncSender, TryRecvError, TrySendError};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;
use std::time::{Duration, Instant};
use tungstenite::protocol::frame::coding::CloseCode;
use tungstenite::protocol::CloseFrame;
use tungstenite::{Message, Utf8Bytes, WebSocket};

use super::benchmark::{build_report, run_dir, write_csv, write_report, SessionReport};
use super::events::{EndReason, EventLog};
use super::session::{Session, SessionOutcome};
use super::{HarnessError, SessionConfig};
use crate::explore::{CommandQueue, TeleopCommand};
use crate::semknow::{encode_cell_runs, CellState, ObjectMessage};
use crate::simkernel::{MotionLimits, SensorConfig};
use crate::worldmodel::{ObjectId, Taxonomy, WorldSpec};

/// Messages buffered per client before the client is dropped as too slow.
const OUTBOX_CAPACITY: usize = 4096;
/// Client messages buffered between two session ticks.
const INBOX_CAPACITY: usize = 1024;
/// How long a connection handler blocks on its socket per poll.
const POLL_INTERVAL: Duration = Duration::from_millis(5);
const HANDSHAKE_TIMEOUT: Duration = Duration::from_secs(5);
/// Upper bound on ticks simulated between two polls of the inbox.
const MAX_TICKS_PER_POLL: usize = 256;

/// Static description of the served session, sent once per connection and
/// again after every reset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldMeta {
    pub name: String,
    pub frame: String,
    /// Grid width in cells.
    pub width: usize,
    /// Grid height in cells.
    pub height: usize,
    /// Cell side in metres.
    pub resolution: f64,
    pub taxonomy: Taxonomy,
    pub metrics: Vec<String>,
    pub policy: String,
    pub run_id: u32,
    pub seed: u64,
    pub duration: f64,
    pub dt: f64,
    pub sample_period: f64,
    pub frame_rate: f64,
    pub real_time_factor: f64,
    pub sensors: SensorConfig,
    pub limits: MotionLimits,
}

/// An object as the robot knows it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameObject {
    pub id: ObjectId,
    pub label: String,
    /// `[label, parent, …, root]`.
    pub chain: Vec<String>,
    /// Mean of the observed surface points.
    pub centroid: [f64; 2],
    /// Width and height of the observed surface points.
    pub bbox: [f64; 2],
    pub confidence: f64,
}

impl From<&ObjectMessage> for FrameObject {
    fn from(m: &ObjectMessage) -> Self {
        Self {
            id: m.object_id,
            label: m.label.clone(),
            chain: m.category_chain.clone(),
            centroid: m.centroid,
            bbox: m.bbox,
            confidence: m.confidence,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FramePose {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
    pub v: f64,
    pub omega: f64,
}

/// Server to client.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ServerMessage {
    Hello(WorldMeta),
    Frame {
        t: f64,
        /// Whether sim time is advancing.
        running: bool,
        pose: FramePose,
        /// Known-map cells revealed since the previous frame as
        /// `[start, length, state]` runs over row-major cell indices, with
        /// state 1 = free and 2 = occupied. The first frame after `hello`
        /// carries every known cell.
        cells: Vec<[usize; 3]>,
        /// Latest lidar ranges in metres, millimetre precision.
        ranges: Vec<f64>,
        objects: Vec<FrameObject>,
        /// Latest metric samples.
        metrics: BTreeMap<String, f64>,
    },
    Done {
        t: f64,
        reason: EndReason,
        /// Path of the written `report.json`, if artifacts are persisted.
        report: Option<PathBuf>,
    },
}

/// Client to server.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ClientMessage {
    CmdVel {
        v: f64,
        #[serde(rename = "omega", alias = "w", alias = "ω")]
        w: f64,
    },
    SetGoal {
        x: f64,
        y: f64,
    },
    Reset,
    Start,
}

impl ClientMessage {
    const TYPES: [&'static str; 4] = ["cmd_vel", "set_goal", "reset", "start"];

    /// Parses one text message. Unknown message types yield `Ok(None)`;
    /// anything else that does not parse is a protocol violation.
    pub fn parse(text: &str) -> Result<Option<Self>, String> {
        let value: serde_json::Value =
            serde_json::from_str(text).map_err(|e| format!("invalid JSON: {e}"))?;
        let Some(kind) = value
            .get("type")
            .and_then(|t| t.as_str())
            .map(str::to_owned)
        else {
            return Err("message without a string \"type\" field".into());
        };
        if !Self::TYPES.contains(&kind.as_str()) {
            log::warn!("ignoring client message of unknown type {kind:?}");
            return Ok(None);
        }
        serde_json::from_value(value)
            .map(Some)
            .map_err(|e| format!("malformed {kind}: {e}"))
    }
}

impl ServerMessage {
    fn encode(&self) -> Utf8Bytes {
        Utf8Bytes::from(serde_json::to_string(self).expect("server messages serialize"))
    }
}

/// A running server. Dropping the handle does not stop the server.
#[derive(Debug)]
pub struct ServerHandle {
    addr: SocketAddr,
    shutdown: Arc<AtomicBool>,
    thread: Option<JoinHandle<Result<SessionReport, HarnessError>>>,
}

impl ServerHandle {
    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    /// Asks the server to stop the current session and exit.
    pub fn shutdown(&self) {
        self.shutdown.store(true, Ordering::SeqCst);
    }

    /// Waits for the server to exit and returns the report over every
    /// session it ran.
    pub fn join(mut self) -> Result<SessionReport, HarnessError> {
        let thread = self.thread.take().expect("joined once");
        thread
            .join()
            .unwrap_or_else(|e| std::panic::resume_unwind(e))
    }
}

/// Serves one live session over WebSocket at `bind`.
///
/// The session waits for a `start` message unless `serve.autostart` is set,
/// then advances at `real_time_factor` sim seconds per wall second and
/// broadcasts a frame every `1 / frame_rate` sim seconds. `reset` stops the
/// current session, persists it and begins the next run with seed
/// `seed + run_id`. The server exits after the first session that ends on
/// its own, after sending `done` to every client.
pub fn serve(config: &SessionConfig, bind: &str) -> Result<ServerHandle, HarnessError> {
    let world = config.validate()?;
    let listener = TcpListener::bind(bind).map_err(|source| HarnessError::Bind {
        addr: bind.to_string(),
        source,
    })?;
    let addr = listener.local_addr().map_err(|source| HarnessError::Bind {
        addr: bind.to_string(),
        source,
    })?;
    listener
        .set_nonblocking(true)
        .map_err(|source| HarnessError::Bind {
            addr: bind.to_string(),
            source,
        })?;
    if let Some(out) = &config.out {
        std::fs::create_dir_all(out).map_err(|e| HarnessError::io(out, e))?;
    }
    log::info!("serving {} on ws://{addr}", world.name);

    let shutdown = Arc::new(AtomicBool::new(false));
    let hub = Hub {
        pending: Arc::new(Mutex::new(Vec::new())),
        inbox: CommandQueue::new(INBOX_CAPACITY),
    };
    let acceptor = {
        let hub = hub.clone();
        let shutdown = Arc::clone(&shutdown);
        std::thread::spawn(move || accept_loop(listener, hub, shutdown))
    };
    let thread = {
        let config = config.clone();
        let shutdown = Arc::clone(&shutdown);
        std::thread::spawn(move || {
            let result =
                Server::new(config, world, hub, Arc::clone(&shutdown)).and_then(Server::run);
            shutdown.store(true, Ordering::SeqCst);
            let _ = acceptor.join();
            result
        })
    };
    Ok(ServerHandle {
        addr,
        shutdown,
        thread: Some(thread),
    })
}

/// What connection handlers share with the session loop.
#[derive(Clone)]
struct Hub {
    /// Outboxes of connections that have not yet received `hello`.
    pending: Arc<Mutex<Vec<SyncSender<Utf8Bytes>>>>,
    inbox: CommandQueue<ClientMessage>,
}

fn accept_loop(listener: TcpListener, hub: Hub, shutdown: Arc<AtomicBool>) {
    let mut handlers = Vec::new();
    while !shutdown.load(Ordering::SeqCst) {
        match listener.accept() {
            Ok((stream, peer)) => {
                let hub = hub.clone();
                handlers.push(std::thread::spawn(move || {
                    handle_connection(stream, peer, hub)
                }));
            }
            Err(e) if e.kind() == std::io::ErrorKind::WouldBlock => {
                std::thread::sleep(POLL_INTERVAL)
            }
            Err(e) => {
                log::warn!("accept failed: {e}");
                std::thread::sleep(POLL_INTERVAL);
            }
        }
    }
    for h in handlers {
        let _ = h.join();
    }
}

fn handle_connection(stream: TcpStream, peer: SocketAddr, hub: Hub) {
    let setup = stream
        .set_nonblocking(false)
        .and_then(|()| stream.set_read_timeout(Some(HANDSHAKE_TIMEOUT)));
    if let Err(e) = setup {
        log::warn!("{peer}: {e}");
        return;
    }
    let mut ws = match tungstenite::accept(stream) {
        Ok(ws) => ws,
        Err(e) => {
            log::warn!("{peer}: handshake failed: {e}");
            return;
        }
    };
    if let Err(e) = ws.get_ref().set_read_timeout(Some(POLL_INTERVAL)) {
        log::warn!("{peer}: {e}");
        return;
    }
    log::info!("{peer} connected");
    let (tx, rx) = mpsc::sync_channel(OUTBOX_CAPACITY);
    hub.pending
        .lock()
        .unwrap_or_else(|e| e.into_inner())
        .push(tx);
    match connection_loop(&mut ws, &rx, &hub.inbox) {
        Ok(()) => log::info!("{peer} disconnected"),
        Err(e) => log::warn!("{peer}: {e}"),
    }
}

fn is_timeout(e: &tungstenite::Error) -> bool {
    matches!(e, tungstenite::Error::Io(io)
        if matches!(io.kind(), std::io::ErrorKind::WouldBlock | std::io::ErrorKind::TimedOut))
}

/// Pumps one connection until either side closes it.
fn connection_loop(
    ws: &mut WebSocket<TcpStream>,
    outbox: &Receiver<Utf8Bytes>,
    inbox: &CommandQueue<ClientMessage>,
) -> Result<(), tungstenite::Error> {
    loop {
        loop {
            match outbox.try_recv() {
                Ok(text) => ws.send(Message::Text(text))?,
                Err(TryRecvError::Empty) => break,
                Err(TryRecvError::Disconnected) => {
                    return close(ws, CloseCode::Normal, "session over")
                }
            }
        }
        match ws.read() {
            Ok(Message::Text(text)) => match ClientMessage::parse(text.as_str()) {
                Ok(Some(message)) => inbox.push(message),
                Ok(None) => {}
                Err(reason) => {
                    log::warn!("closing connection: {reason}");
                    return close(ws, CloseCode::Protocol, &reason);
                }
            },
            Ok(Message::Binary(_)) => {
                return close(
                    ws,
                    CloseCode::Unsupported,
                    "binary messages are not supported",
                )
            }
            Ok(Message::Close(_)) => return drain_close(ws),
            Ok(_) => {}
            Err(e) if is_timeout(&e) => {}
            Err(tungstenite::Error::ConnectionClosed | tungstenite::Error::AlreadyClosed) => {
                return Ok(())
            }
            Err(e) => return Err(e),
        }
    }
}

fn close(
    ws: &mut WebSocket<TcpStream>,
    code: CloseCode,
    reason: &str,
) -> Result<(), tungstenite::Error> {
    let reason: String = reason.chars().take(120).collect();
    ws.close(Some(CloseFrame {
        code,
        reason: reason.into(),
    }))?;
    drain_close(ws)
}

/// Completes the closing handshake, giving up after the handshake timeout.
fn drain_close(ws: &mut WebSocket<TcpStream>) -> Result<(), tungstenite::Error> {
    let deadline = Instant::now() + HANDSHAKE_TIMEOUT;
    while Instant::now() < deadline {
        match ws.read() {
            Ok(_) => {}
            Err(e) if is_timeout(&e) => {}
            Err(tungstenite::Error::ConnectionClosed | tungstenite::Error::AlreadyClosed) => {
                return Ok(())
            }
            Err(e) => return Err(e),
        }
    }
    Ok(())
}

/// Maps sim time to wall time while the session runs.
struct Clock {
    wall: Instant,
    sim: f64,
    factor: f64,
}

impl Clock {
    fn wall_at(&self, sim: f64) -> Instant {
        self.wall + Duration::from_secs_f64(((sim - self.sim) / self.factor).max(0.0))
    }
}

/// The session loop: the only writer of session state.
struct Server {
    config: SessionConfig,
    world: WorldSpec,
    hub: Hub,
    shutdown: Arc<AtomicBool>,
    clients: Vec<SyncSender<Utf8Bytes>>,
    session: Session,
    clock: Option<Clock>,
    held: Vec<TeleopCommand>,
    next_frame: f64,
    outcomes: Vec<SessionOutcome>,
}

impl Server {
    fn new(
        config: SessionConfig,
        world: WorldSpec,
        hub: Hub,
        shutdown: Arc<AtomicBool>,
    ) -> Result<Self, HarnessError> {
        let session = open_session(&config, &world, 0)?;
        let mut server = Self {
            config,
            world,
            hub,
            shutdown,
            clients: Vec::new(),
            session,
            clock: None,
            held: Vec::new(),
            next_frame: 0.0,
            outcomes: Vec::new(),
        };
        server.begin();
        Ok(server)
    }

    fn frame_period(&self) -> f64 {
        1.0 / self.config.serve.frame_rate
    }

    /// Prepares the freshly opened session for streaming.
    fn begin(&mut self) {
        self.session.take_cell_changes();
        self.held.clear();
        self.next_frame = self.session.t() + self.frame_period();
        self.clock = self.config.serve.autostart.then(|| self.clock_now());
    }

    fn clock_now(&self) -> Clock {
        Clock {
            wall: Instant::now(),
            sim: self.session.t(),
            factor: self.config.serve.real_time_factor,
        }
    }

    fn run(mut self) -> Result<SessionReport, HarnessError> {
        loop {
            self.admit();
            self.handle_inbox()?;
            if self.shutdown.load(Ordering::SeqCst) {
                self.session.stop()?;
            } else if self.clock.is_some() {
                self.advance_due()?;
            }
            if self.session.is_finished() {
                let report = self.close_session()?;
                self.broadcast(&self.frame(Vec::new()));
                let (reason, t) = {
                    let last = self.outcomes.last().expect("closed session");
                    (last.end_reason, last.end_time)
                };
                self.broadcast(&ServerMessage::Done { t, reason, report });
                self.clients.clear();
                return Ok(build_report(&self.config, self.outcomes));
            }
            self.pause();
        }
    }

    /// Sends `hello` and a catch-up frame to new connections.
    fn admit(&mut self) {
        let pending: Vec<_> =
            std::mem::take(&mut *self.hub.pending.lock().unwrap_or_else(|e| e.into_inner()));
        if pending.is_empty() {
            return;
        }
        let hello = ServerMessage::Hello(self.meta()).encode();
        let catch_up = self.catch_up().encode();
        for tx in pending {
            if tx.try_send(hello.clone()).is_ok() && tx.try_send(catch_up.clone()).is_ok() {
                self.clients.push(tx);
            }
        }
    }

    fn handle_inbox(&mut self) -> Result<(), HarnessError> {
        for message in self.hub.inbox.drain() {
            match message {
                ClientMessage::Start => {
                    if self.clock.is_none() {
                        log::info!("session started at t = {}", self.session.t());
                        self.clock = Some(self.clock_now());
                    }
                }
                ClientMessage::Reset => {
                    self.session.stop()?;
                    self.close_session()?;
                    let run_id = self.outcomes.len() as u32;
                    self.session = open_session(&self.config, &self.world, run_id)?;
                    self.begin();
                    log::info!("session reset, now run {run_id}");
                    self.broadcast(&ServerMessage::Hello(self.meta()));
                    self.broadcast(&self.catch_up());
                }
                ClientMessage::CmdVel { v, w } => self.hold(TeleopCommand::CmdVel { v, w }),
                ClientMessage::SetGoal { x, y } => self.hold(TeleopCommand::SetGoal { x, y }),
            }
        }
        Ok(())
    }

    fn hold(&mut self, command: TeleopCommand) {
        if self.clock.is_some() {
            self.held.push(command);
        } else {
            log::debug!("ignoring {command:?} before start");
        }
    }

    /// Runs every tick whose wall time has come.
    fn advance_due(&mut self) -> Result<(), HarnessError> {
        let dt = self.config.dt;
        for _ in 0..MAX_TICKS_PER_POLL {
            let clock = self.clock.as_ref().expect("running");
            if self.session.is_finished() || clock.wall_at(self.session.t() + dt) > Instant::now() {
                break;
            }
            let commands = std::mem::take(&mut self.held);
            self.session.advance(&commands)?;
            if self.session.t() >= self.next_frame - 1e-9 {
                while self.next_frame <= self.session.t() + 1e-9 {
                    self.next_frame += self.frame_period();
                }
                let cells = encode_cell_runs(&self.session.take_cell_changes());
                self.broadcast(&self.frame(cells));
            }
        }
        Ok(())
    }

    /// Sleeps until the next tick is due or the next poll, whichever is
    /// sooner.
    fn pause(&self) {
        let mut wait = POLL_INTERVAL;
        if let Some(clock) = &self.clock {
            let due = clock.wall_at(self.session.t() + self.config.dt);
            wait = wait.min(due.saturating_duration_since(Instant::now()));
        }
        if !wait.is_zero() {
            std::thread::sleep(wait);
        }
    }

    /// Ends the current session and writes its artifacts. Returns the
    /// report path when artifacts are persisted.
    fn close_session(&mut self) -> Result<Option<PathBuf>, HarnessError> {
        let run_id = self.session.run_id();
        let outcome = self.session.conclude()?;
        log::info!(
            "run {run_id} ended ({:?}) at t = {}",
            outcome.end_reason,
            outcome.end_time
        );
        self.outcomes.push(outcome);
        let Some(out) = &self.config.out else {
            return Ok(None);
        };
        write_csv(
            &run_dir(out, run_id),
            &self.outcomes.last().expect("just pushed").series,
        )?;
        let report = build_report(&self.config, self.outcomes.clone());
        write_report(out, &report)?;
        Ok(Some(out.join("report.json")))
    }

    fn broadcast(&mut self, message: &ServerMessage) {
        let text = message.encode();
        self.clients.retain(|tx| match tx.try_send(text.clone()) {
            Ok(()) => true,
            Err(TrySendError::Full(_)) => {
                log::warn!("dropping a client that cannot keep up");
                false
            }
            Err(TrySendError::Disconnected(_)) => false,
        });
    }

    fn meta(&self) -> WorldMeta {
        let c = &self.config;
        WorldMeta {
            name: self.world.name.clone(),
            frame: self.world.frame.0.clone(),
            width: self.world.width,
            height: self.world.height,
            resolution: self.world.resolution,
            taxonomy: self.world.taxonomy.clone(),
            metrics: self.session.metric_names(),
            policy: c.policy.kind.as_str().to_string(),
            run_id: self.session.run_id(),
            seed: self.session.seed(),
            duration: c.duration,
            dt: c.dt,
            sample_period: c.sample_period,
            frame_rate: c.serve.frame_rate,
            real_time_factor: c.serve.real_time_factor,
            sensors: c.sensors,
            limits: c.limits,
        }
    }

    /// A frame carrying the whole known map.
    fn catch_up(&self) -> ServerMessage {
        let known: Vec<(usize, CellState)> = self
            .session
            .known()
            .cells()
            .iter()
            .enumerate()
            .filter(|(_, &s)| s != CellState::Unknown)
            .map(|(i, &s)| (i, s))
            .collect();
        self.frame(encode_cell_runs(&known))
    }

    fn frame(&self, cells: Vec<[usize; 3]>) -> ServerMessage {
        let s = &self.session;
        let state = s.state();
        ServerMessage::Frame {
            t: s.t(),
            running: self.clock.is_some() && !s.is_finished(),
            pose: FramePose {
                x: state.pose.x,
                y: state.pose.y,
                theta: state.pose.theta,
                v: state.v,
                omega: state.w,
            },
            cells,
            ranges: s
                .last_scan()
                .map(|scan| {
                    scan.ranges()
                        .into_iter()
                        .map(|r| (r * 1000.0).round() / 1000.0)
                        .collect()
                })
                .unwrap_or_default(),
            objects: s.objects().values().map(FrameObject::from).collect(),
            metrics: s.latest_samples().clone(),
        }
    }
}

fn open_session(
    config: &SessionConfig,
    world: &WorldSpec,
    run_id: u32,
) -> Result<Session, HarnessError> {
    let log = match &config.out {
        Some(out) => {
            let dir = run_dir(out, run_id);
            std::fs::create_dir_all(&dir).map_err(|e| HarnessError::io(&dir, e))?;
            let path = dir.join("events.jsonl");
            let file = std::fs::File::create(&path).map_err(|e| HarnessError::io(&path, e))?;
            EventLog::new(Box::new(BufWriter::new(file)))
        }
        None => EventLog::sink(),
    };
    Session::new(config, world.clone(), run_id, log)
}
