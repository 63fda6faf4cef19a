use std::collections::VecDeque;
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::mpsc::{sync_channel, Receiver, RecvTimeoutError, SyncSender};
use std::sync::{Arc, Condvar, Mutex};
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use nalgebra::{Vector2, Vector3};
use serde_json::Value;
use tungstenite::{Message, WebSocket};

use lidarsim_core::control::build_spline;
use lidarsim_core::engine::{emit, ControlEvent};
use lidarsim_core::kinematics::lift_to_pose3;
use lidarsim_core::scene::{SceneObject, Shape};
use lidarsim_core::store::{encode_cloud, BundleWriter};
use lidarsim_core::{PlanarTwist, PointCloudFrame, Scene, Simulation};

use crate::downsample::fit_to_cap;
use crate::wire::{
    code, decode_client, encode_cloud_message, encode_text, ClientMessage, CloudHeader, Footprint,
    MoverFootprint, ObjectFootprint, PathPayload, PlanarPose, Role, RunAction, SceneSummaryPayload,
    ServerHello, StatePayload, TeleopCommand, TrackerStatus, Twist, WireError, PROTOCOL,
    PROTOCOL_VERSION,
};
use crate::ServiceError;

#[derive(Debug, Clone, PartialEq)]
pub struct ServiceConfig {
    /// Bind address, `host:port`.
    pub listen: String,
    /// `state` messages per wall-clock second.
    pub state_rate: f64,
    /// Starting voxel edge for cloud downsampling, m.
    pub voxel: f64,
    pub cloud_cap: usize,
    /// Controller commands buffered before the reader blocks.
    pub command_queue: usize,
    /// Sim seconds per wall second; 0 runs unpaced.
    pub pace: f64,
    /// Where `cmd_run record` writes bundles.
    pub record_dir: Option<PathBuf>,
    pub autostart: bool,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            listen: "127.0.0.1:8765".into(),
            state_rate: 20.0,
            voxel: 0.05,
            cloud_cap: 20_000,
            command_queue: 256,
            pace: 1.0,
            record_dir: None,
            autostart: true,
        }
    }
}

impl ServiceConfig {
    pub fn validate(&self) -> Result<(), ServiceError> {
        let bad = |m: &str| Err(ServiceError::Config(m.to_string()));
        if !(self.state_rate > 0.0) || !self.state_rate.is_finite() {
            return bad("state_rate must be positive");
        }
        if !(self.voxel > 0.0) || !self.voxel.is_finite() {
            return Err(ServiceError::InvalidVoxel(self.voxel));
        }
        if self.cloud_cap == 0 {
            return bad("cloud_cap must be positive");
        }
        if self.command_queue == 0 {
            return bad("command_queue must be positive");
        }
        if !(self.pace >= 0.0) || !self.pace.is_finite() {
            return bad("pace must be finite and non-negative");
        }
        Ok(())
    }
}

/// Outbound message before it gets a per-connection `seq`.
#[derive(Debug, Clone)]
enum Outgoing {
    Text { kind: &'static str, t_sim: f64, payload: Arc<Value> },
    Cloud { t_sim: f64, header: Arc<CloudHeader>, mspc: Arc<Vec<u8>> },
}

#[derive(Default)]
struct OutboxState {
    ordered: VecDeque<Outgoing>,
    path: Option<Outgoing>,
    state: Option<Outgoing>,
    cloud: Option<Outgoing>,
    dropped: u64,
}

/// Per-client outbound queue. Telemetry slots keep only the newest message
/// of their type; hello, scene summaries and errors are never dropped.
#[derive(Default)]
struct Outbox {
    inner: Mutex<OutboxState>,
    ready: Condvar,
}

impl Outbox {
    fn push_ordered(&self, m: Outgoing) {
        self.inner.lock().expect("outbox lock").ordered.push_back(m);
        self.ready.notify_one();
    }

    fn push_latest(&self, kind: &str, m: Outgoing) {
        let mut g = self.inner.lock().expect("outbox lock");
        let slot = match kind {
            "path" => &mut g.path,
            "state" => &mut g.state,
            _ => &mut g.cloud,
        };
        let replaced = slot.replace(m).is_some();
        if replaced {
            g.dropped += 1;
        }
        drop(g);
        self.ready.notify_one();
    }

    fn take(&self, wait: Duration) -> Vec<Outgoing> {
        let mut g = self.inner.lock().expect("outbox lock");
        let empty = |s: &OutboxState| s.ordered.is_empty() && s.path.is_none() && s.state.is_none() && s.cloud.is_none();
        if empty(&g) {
            g = self.ready.wait_timeout(g, wait).expect("outbox lock").0;
        }
        let mut out: Vec<Outgoing> = g.ordered.drain(..).collect();
        out.extend(g.path.take());
        out.extend(g.state.take());
        out.extend(g.cloud.take());
        out
    }
}

struct Client {
    id: u64,
    outbox: Arc<Outbox>,
}

#[derive(Default)]
struct Registry {
    clients: Vec<Client>,
    controller: Option<u64>,
    hello: Option<ServerHello>,
    scene_summary: Option<Arc<Value>>,
    path: Option<Arc<Value>>,
    t_sim: f64,
}

struct Hub {
    registry: Mutex<Registry>,
    stop: AtomicBool,
    next_id: AtomicU64,
}

impl Hub {
    fn broadcast(&self, kind: &'static str, t_sim: f64, payload: Value) {
        let payload = Arc::new(payload);
        let g = self.registry.lock().expect("registry lock");
        for c in &g.clients {
            c.outbox.push_latest(kind, Outgoing::Text { kind, t_sim, payload: payload.clone() });
        }
    }

    fn broadcast_cloud(&self, t_sim: f64, header: CloudHeader, mspc: Vec<u8>) {
        let (header, mspc) = (Arc::new(header), Arc::new(mspc));
        let g = self.registry.lock().expect("registry lock");
        for c in &g.clients {
            c.outbox.push_latest("cloud", Outgoing::Cloud { t_sim, header: header.clone(), mspc: mspc.clone() });
        }
    }

    fn set_path(&self, t_sim: f64, payload: Value) {
        let payload = Arc::new(payload);
        let mut g = self.registry.lock().expect("registry lock");
        g.path = Some(payload.clone());
        for c in &g.clients {
            c.outbox.push_latest("path", Outgoing::Text { kind: "path", t_sim, payload: payload.clone() });
        }
    }

    fn error_to(&self, id: u64, t_sim: f64, e: &WireError) {
        let g = self.registry.lock().expect("registry lock");
        if let Some(c) = g.clients.iter().find(|c| c.id == id) {
            c.outbox.push_ordered(error_message(t_sim, e));
        }
    }

    /// Register a client after its hello and queue the session preamble.
    fn join(&self, id: u64, role: Role, outbox: &Arc<Outbox>) -> Result<(), WireError> {
        let mut g = self.registry.lock().expect("registry lock");
        if role == Role::Controller {
            if g.controller.is_some() {
                return Err(WireError::fatal(code::CONTROLLER_EXISTS, "another client already controls this session"));
            }
            g.controller = Some(id);
        }
        let t = g.t_sim;
        let mut hello = g.hello.clone().expect("hello set before accepting");
        hello.role = role;
        let text = |kind, payload| Outgoing::Text { kind, t_sim: t, payload };
        outbox.push_ordered(text("hello", Arc::new(serde_json::to_value(hello).expect("hello serializes"))));
        if let Some(s) = &g.scene_summary {
            outbox.push_ordered(text("scene_summary", s.clone()));
        }
        if let Some(p) = &g.path {
            outbox.push_latest("path", text("path", p.clone()));
        }
        g.clients.push(Client { id, outbox: outbox.clone() });
        Ok(())
    }

    fn leave(&self, id: u64) {
        let mut g = self.registry.lock().expect("registry lock");
        g.clients.retain(|c| c.id != id);
        if g.controller == Some(id) {
            g.controller = None;
            log::info!("controller {id} disconnected");
        }
    }

    fn t_sim(&self) -> f64 {
        self.registry.lock().expect("registry lock").t_sim
    }
}

fn error_message(t_sim: f64, e: &WireError) -> Outgoing {
    Outgoing::Text {
        kind: "error",
        t_sim,
        payload: Arc::new(serde_json::to_value(e.payload()).expect("error serializes")),
    }
}

/// A controller command on its way to the engine thread.
#[derive(Debug, Clone)]
struct Command {
    client: u64,
    seq: u64,
    message: ClientMessage,
}

/// Handle to a running service.
pub struct Service {
    addr: SocketAddr,
    hub: Arc<Hub>,
    threads: Vec<JoinHandle<()>>,
}

impl Service {
    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    /// Ask every thread to stop and wait for them.
    pub fn shutdown(mut self) {
        self.hub.stop.store(true, Ordering::SeqCst);
        for t in self.threads.drain(..) {
            let _ = t.join();
        }
    }

    /// Block until the service stops.
    pub fn wait(mut self) {
        for t in self.threads.drain(..) {
            let _ = t.join();
        }
    }
}

/// Bind `config.listen` and drive `sim` interactively until shut down.
pub fn serve(mut sim: Simulation, config: ServiceConfig) -> Result<Service, ServiceError> {
    config.validate()?;
    let listener = TcpListener::bind(&config.listen).map_err(|source| ServiceError::Bind {
        addr: config.listen.clone(),
        source,
    })?;
    let addr = listener.local_addr().map_err(|source| ServiceError::Bind { addr: config.listen.clone(), source })?;
    listener.set_nonblocking(true).map_err(|source| ServiceError::Bind { addr: config.listen.clone(), source })?;
    sim.set_interactive();

    let hub = Arc::new(Hub {
        registry: Mutex::new(Registry::default()),
        stop: AtomicBool::new(false),
        next_id: AtomicU64::new(1),
    });
    {
        let mut g = hub.registry.lock().expect("registry lock");
        g.hello = Some(ServerHello {
            protocol: PROTOCOL.into(),
            version: PROTOCOL_VERSION,
            role: Role::Observer,
            scene: sim.scene().name.clone(),
            lidar: sim.lidar().name.clone(),
            tick_rate: 1.0 / sim.config().base_dt,
            state_rate: config.state_rate,
            frame_rate: sim.lidar().frame_rate,
            cloud_cap: config.cloud_cap,
        });
        g.scene_summary = Some(Arc::new(
            serde_json::to_value(scene_summary(sim.scene(), sim.time())).expect("summary serializes"),
        ));
        g.t_sim = sim.time();
    }
    let (tx, rx) = sync_channel::<Command>(config.command_queue);
    log::info!("serving on ws://{addr}");

    let engine = {
        let hub = hub.clone();
        let config = config.clone();
        std::thread::Builder::new()
            .name("engine".into())
            .spawn(move || EngineLoop::new(sim, config, hub).run(rx))
            .map_err(|e| ServiceError::Config(e.to_string()))?
    };
    let acceptor = {
        let hub = hub.clone();
        std::thread::Builder::new()
            .name("accept".into())
            .spawn(move || accept_loop(listener, hub, tx))
            .map_err(|e| ServiceError::Config(e.to_string()))?
    };
    Ok(Service { addr, hub, threads: vec![engine, acceptor] })
}

fn accept_loop(listener: TcpListener, hub: Arc<Hub>, tx: SyncSender<Command>) {
    let mut sessions: Vec<JoinHandle<()>> = Vec::new();
    while !hub.stop.load(Ordering::SeqCst) {
        match listener.accept() {
            Ok((stream, peer)) => {
                let id = hub.next_id.fetch_add(1, Ordering::SeqCst);
                log::info!("client {id} connected from {peer}");
                let (hub, tx) = (hub.clone(), tx.clone());
                match std::thread::Builder::new()
                    .name(format!("client-{id}"))
                    .spawn(move || session(stream, id, hub, tx))
                {
                    Ok(h) => sessions.push(h),
                    Err(e) => log::error!("cannot start session thread: {e}"),
                }
                sessions.retain(|h| !h.is_finished());
            }
            Err(e) if e.kind() == std::io::ErrorKind::WouldBlock => std::thread::sleep(Duration::from_millis(5)),
            Err(e) => {
                log::warn!("accept failed: {e}");
                std::thread::sleep(Duration::from_millis(5));
            }
        }
    }
    for h in sessions {
        let _ = h.join();
    }
}

fn outgoing_message(seq: u64, m: &Outgoing) -> Message {
    match m {
        Outgoing::Text { kind, t_sim, payload } => {
            Message::text(encode_text(kind, seq, *t_sim, (**payload).clone()))
        }
        Outgoing::Cloud { t_sim, header, mspc } => Message::binary(encode_cloud_message(seq, *t_sim, header, mspc)),
    }
}

struct Session {
    id: u64,
    hub: Arc<Hub>,
    tx: SyncSender<Command>,
    outbox: Arc<Outbox>,
    role: Option<Role>,
    last_seq: Option<u64>,
    out_seq: u64,
}

impl Session {
    fn handle_text(&mut self, text: &str) -> Result<(), WireError> {
        let (seq, msg) = decode_client(text)?;
        if let Some(last) = self.last_seq {
            if seq <= last {
                return Err(WireError::fatal(code::BAD_SEQ, format!("seq {seq} does not follow {last}")));
            }
        }
        self.last_seq = Some(seq);
        match (&msg, self.role) {
            (ClientMessage::Hello(h), None) => {
                if h.version.is_some_and(|v| v != PROTOCOL_VERSION) {
                    log::warn!("client {} speaks protocol version {:?}", self.id, h.version);
                }
                self.hub.join(self.id, h.role, &self.outbox)?;
                self.role = Some(h.role);
                Ok(())
            }
            (ClientMessage::Hello(_), Some(_)) => Err(WireError::fatal(code::BAD_PAYLOAD, "repeated hello")),
            (_, None) => Err(WireError::fatal(code::HELLO_REQUIRED, "send hello first")),
            (_, Some(Role::Observer)) => {
                Err(WireError::fatal(code::NOT_CONTROLLER, format!("observers may not send {}", msg.kind())))
            }
            (ClientMessage::Waypoints(points), Some(Role::Controller)) => {
                let pts: Vec<Vector2<f64>> = points.iter().map(|p| Vector2::new(p[0], p[1])).collect();
                if let Err(e) = build_spline(&pts) {
                    return Err(WireError::soft(code::INVALID_WAYPOINTS, e.to_string()));
                }
                self.forward(seq, msg)
            }
            (_, Some(Role::Controller)) => self.forward(seq, msg),
        }
    }

    /// Commands are never dropped: a full queue blocks this reader.
    fn forward(&self, seq: u64, message: ClientMessage) -> Result<(), WireError> {
        self.tx
            .send(Command { client: self.id, seq, message })
            .map_err(|_| WireError::fatal(code::ENGINE_FAILURE, "engine stopped"))
    }

    fn flush(&mut self, ws: &mut WebSocket<TcpStream>, wait: Duration) -> Result<(), tungstenite::Error> {
        for m in self.outbox.take(wait) {
            self.out_seq += 1;
            ws.send(outgoing_message(self.out_seq, &m))?;
        }
        Ok(())
    }

    /// Send the error immediately, bypassing the outbox.
    fn reject(&mut self, ws: &mut WebSocket<TcpStream>, e: &WireError) {
        log::info!("client {}: {} ({})", self.id, e.code, e.message);
        let _ = self.flush(ws, Duration::ZERO);
        self.out_seq += 1;
        let _ = ws.send(outgoing_message(self.out_seq, &error_message(self.hub.t_sim(), e)));
        if e.fatal {
            let _ = ws.close(None);
            let _ = ws.flush();
        }
    }
}

fn session(stream: TcpStream, id: u64, hub: Arc<Hub>, tx: SyncSender<Command>) {
    let _ = stream.set_nonblocking(false);
    let _ = stream.set_nodelay(true);
    let mut ws = match tungstenite::accept(stream) {
        Ok(ws) => ws,
        Err(e) => {
            log::warn!("client {id}: handshake failed: {e}");
            return;
        }
    };
    let _ = ws.get_ref().set_read_timeout(Some(Duration::from_millis(2)));
    let mut s = Session { id, hub: hub.clone(), tx, outbox: Arc::new(Outbox::default()), role: None, last_seq: None, out_seq: 0 };
    loop {
        if hub.stop.load(Ordering::SeqCst) {
            let _ = ws.close(None);
            let _ = ws.flush();
            break;
        }
        if s.flush(&mut ws, Duration::from_millis(2)).is_err() {
            break;
        }
        match ws.read() {
            Ok(Message::Text(t)) => {
                if let Err(e) = s.handle_text(t.as_str()) {
                    s.reject(&mut ws, &e);
                    if e.fatal {
                        break;
                    }
                }
            }
            Ok(Message::Binary(_)) => {
                s.reject(&mut ws, &WireError::fatal(code::BINARY_REJECTED, "clients may not send binary frames"));
                break;
            }
            Ok(Message::Close(_)) => {
                let _ = ws.flush();
                break;
            }
            Ok(_) => {}
            Err(tungstenite::Error::Io(e))
                if matches!(e.kind(), std::io::ErrorKind::WouldBlock | std::io::ErrorKind::TimedOut) => {}
            Err(_) => break,
        }
    }
    hub.leave(id);
    let dropped = s.outbox.inner.lock().map(|g| g.dropped).unwrap_or(0);
    log::info!("client {id} closed, {dropped} stale telemetry messages dropped");
}

fn footprint(obj: &SceneObject, t: f64) -> Footprint {
    let pose = obj.pose_at(t);
    let xy = |v: Vector3<f64>| [v.x, v.y];
    match &obj.geometry.shape {
        Shape::Plane => Footprint::Unbounded,
        Shape::Sphere { radius } | Shape::Cylinder { radius, .. } => Footprint::Circle {
            center: xy(pose.position),
            radius: *radius,
        },
        Shape::Box { half_extents: h } => Footprint::Polygon(
            [(-1.0, -1.0), (1.0, -1.0), (1.0, 1.0), (-1.0, 1.0)]
                .iter()
                .map(|&(sx, sy)| xy(pose.transform_point(&Vector3::new(sx * h.x, sy * h.y, 0.0))))
                .collect(),
        ),
        Shape::Mesh(m) => {
            let mut lo = [f64::INFINITY; 2];
            let mut hi = [f64::NEG_INFINITY; 2];
            for v in &m.vertices {
                let p = pose.transform_point(v);
                lo = [lo[0].min(p.x), lo[1].min(p.y)];
                hi = [hi[0].max(p.x), hi[1].max(p.y)];
            }
            Footprint::Polygon(vec![lo, [hi[0], lo[1]], hi, [lo[0], hi[1]]])
        }
    }
}

/// Ground-plane outline of every object at time `t`.
pub fn scene_summary(scene: &Scene, t: f64) -> SceneSummaryPayload {
    SceneSummaryPayload {
        name: scene.name.clone(),
        objects: scene
            .objects
            .iter()
            .map(|o| ObjectFootprint {
                id: o.id.to_string(),
                kind: o.geometry.shape.kind_name().to_string(),
                mover: o.is_mover(),
                footprint: footprint(o, t),
            })
            .collect(),
    }
}

struct Recording {
    writer: BundleWriter,
    first_frame: Option<u64>,
}

struct EngineLoop {
    sim: Simulation,
    config: ServiceConfig,
    hub: Arc<Hub>,
    running: bool,
    ack: u64,
    /// Highest seq taken in but not yet consumed by a tick.
    pending_ack: u64,
    last_path: Option<usize>,
    anchor: Instant,
    anchor_tick: u64,
    recording: Option<Recording>,
    sessions_recorded: u32,
    last_twist: PlanarTwist,
}

impl EngineLoop {
    fn new(sim: Simulation, config: ServiceConfig, hub: Arc<Hub>) -> Self {
        let anchor_tick = sim.tick_index();
        Self {
            running: config.autostart,
            sim,
            config,
            hub,
            ack: 0,
            pending_ack: 0,
            last_path: None,
            anchor: Instant::now(),
            anchor_tick,
            recording: None,
            sessions_recorded: 0,
            last_twist: PlanarTwist::ZERO,
        }
    }

    fn rebase(&mut self) {
        self.anchor = Instant::now();
        self.anchor_tick = self.sim.tick_index();
    }

    fn run(mut self, rx: Receiver<Command>) {
        let state_period = Duration::from_secs_f64(1.0 / self.config.state_rate);
        let mut next_state = Instant::now();
        self.publish_path();
        while !self.hub.stop.load(Ordering::SeqCst) {
            let wait = if self.running && self.config.pace == 0.0 {
                Duration::ZERO
            } else {
                Duration::from_millis(1)
            };
            match rx.recv_timeout(wait) {
                Ok(c) => {
                    self.apply(c);
                    while let Ok(c) = rx.try_recv() {
                        self.apply(c);
                    }
                }
                Err(RecvTimeoutError::Timeout) => {}
                Err(RecvTimeoutError::Disconnected) => {}
            }
            if self.running {
                self.advance();
            }
            let now = Instant::now();
            if now >= next_state {
                self.publish_state();
                next_state += state_period;
                if next_state < now {
                    next_state = now + state_period;
                }
            }
        }
        self.stop_recording();
    }

    fn due_ticks(&self) -> u64 {
        if self.config.pace == 0.0 {
            return 1;
        }
        let sim_elapsed = self.anchor.elapsed().as_secs_f64() * self.config.pace;
        let target = self.anchor_tick + (sim_elapsed / self.sim.config().base_dt) as u64;
        target.saturating_sub(self.sim.tick_index())
    }

    fn advance(&mut self) {
        let due = self.due_ticks();
        if due > 50 {
            log::debug!("engine {due} ticks behind real time");
        }
        for _ in 0..due.min(50) {
            match self.sim.tick() {
                Ok(Some(out)) => {
                    self.last_twist = out.ground_truth.twist;
                    self.ack = self.pending_ack;
                    if let Some(rec) = &mut self.recording {
                        let mut out = out.clone();
                        if let Some(f) = &mut out.frame {
                            let first = *rec.first_frame.get_or_insert(f.index);
                            f.index -= first;
                        }
                        if let Err(e) = emit(&out, &mut rec.writer) {
                            log::error!("recording failed: {e}");
                            self.recording = None;
                            self.fail(format!("recording failed: {e}"));
                        }
                    }
                    if let Some(f) = &out.frame {
                        self.publish_cloud(f);
                    }
                    self.publish_path();
                }
                Ok(None) => {
                    self.running = false;
                    break;
                }
                Err(e) => {
                    self.fail(format!("engine error: {e}"));
                    break;
                }
            }
        }
        if due > 50 {
            self.rebase();
        }
    }

    fn fail(&mut self, message: String) {
        log::error!("{message}");
        self.running = false;
        let e = WireError::soft(code::ENGINE_FAILURE, message);
        let payload = serde_json::to_value(e.payload()).expect("error serializes");
        let g = self.hub.registry.lock().expect("registry lock");
        for c in &g.clients {
            c.outbox.push_ordered(Outgoing::Text { kind: "error", t_sim: self.sim.time(), payload: Arc::new(payload.clone()) });
        }
    }

    fn apply(&mut self, c: Command) {
        self.pending_ack = self.pending_ack.max(c.seq);
        match c.message {
            ClientMessage::Teleop(TeleopCommand::Key { key }) => self.sim.push_event(ControlEvent::Key(key)),
            ClientMessage::Teleop(TeleopCommand::Twist { v, w }) => {
                self.sim.push_event(ControlEvent::Twist(PlanarTwist::new(v, w)))
            }
            ClientMessage::Waypoints(points) => self.sim.push_event(ControlEvent::Waypoints(points)),
            ClientMessage::Run(RunAction::Start) => {
                self.running = true;
                self.rebase();
            }
            ClientMessage::Run(RunAction::Pause) => self.running = false,
            ClientMessage::Run(RunAction::Reset) => self.reset(c.client),
            ClientMessage::Run(RunAction::Record) => {
                if self.recording.is_some() {
                    self.stop_recording();
                } else {
                    self.start_recording(c.client);
                }
            }
            ClientMessage::Hello(_) => {}
        }
        if !self.running {
            self.ack = self.pending_ack;
        }
    }

    fn reset(&mut self, client: u64) {
        self.stop_recording();
        let config = self.sim.config().clone();
        match Simulation::with_scene(config, self.sim.scene().clone()) {
            Ok(mut sim) => {
                sim.set_interactive();
                self.sim = sim;
                self.last_twist = PlanarTwist::ZERO;
                self.rebase();
                self.publish_path();
                self.publish_state();
            }
            Err(e) => self.hub.error_to(client, self.sim.time(), &WireError::soft(code::ENGINE_FAILURE, e.to_string())),
        }
    }

    fn start_recording(&mut self, client: u64) {
        let Some(root) = &self.config.record_dir else {
            let e = WireError::soft(code::RECORD_UNAVAILABLE, "service started without a record directory");
            self.hub.error_to(client, self.sim.time(), &e);
            return;
        };
        let dir = loop {
            self.sessions_recorded += 1;
            let d = root.join(format!("session-{:03}", self.sessions_recorded));
            if !d.exists() {
                break d;
            }
        };
        match BundleWriter::create(&dir) {
            Ok(writer) => {
                log::info!("recording to {}", dir.display());
                self.recording = Some(Recording { writer, first_frame: None });
            }
            Err(e) => {
                self.hub.error_to(client, self.sim.time(), &WireError::soft(code::RECORD_UNAVAILABLE, e.to_string()))
            }
        }
    }

    fn stop_recording(&mut self) {
        let Some(rec) = self.recording.take() else { return };
        let dir = rec.writer.dir().to_path_buf();
        let config = serde_json::to_value(self.sim.config()).unwrap_or(Value::Null);
        let summary = serde_json::to_value(self.sim.summary()).unwrap_or(Value::Null);
        match rec.writer.finish(self.sim.config().seed, config, summary) {
            Ok(_) => log::info!("recording written to {}", dir.display()),
            Err(e) => self.fail(format!("cannot finish recording: {e}")),
        }
    }

    fn publish_cloud(&mut self, frame: &PointCloudFrame) {
        let (reduced, voxel) = match fit_to_cap(frame, self.config.voxel, self.config.cloud_cap) {
            Ok(r) => r,
            Err(e) => {
                log::error!("{e}");
                return;
            }
        };
        let sensor = lift_to_pose3(self.sim.state(), self.sim.config().z0, &self.sim.lidar().mount);
        let header = CloudHeader::new(&reduced, frame.points.len(), voxel, &sensor);
        self.hub.broadcast_cloud(self.sim.time(), header, encode_cloud(&reduced));
    }

    fn publish_path(&mut self) {
        let current = self.sim.path().map(|p| Arc::as_ptr(p) as usize);
        if current == self.last_path {
            return;
        }
        self.last_path = current;
        let payload = match self.sim.path() {
            Some(p) => PathPayload {
                points: p.samples.iter().map(|s| [s.x, s.y]).collect(),
                control_points: p.control_points.iter().map(|s| [s.x, s.y]).collect(),
                length: p.length(),
            },
            None => PathPayload { points: vec![], control_points: vec![], length: 0.0 },
        };
        self.hub.set_path(self.sim.time(), serde_json::to_value(payload).expect("path serializes"));
    }

    fn publish_state(&mut self) {
        let t = self.sim.time();
        let st = self.sim.state();
        let tracker = match (self.sim.tracker(), self.sim.path()) {
            (Some(tr), Some(p)) => Some(TrackerStatus {
                target_index: tr.target_index,
                samples: p.samples.len(),
                finished: tr.finished,
            }),
            _ => None,
        };
        let movers = self
            .sim
            .scene()
            .movers()
            .map(|o| MoverFootprint { id: o.id.to_string(), footprint: footprint(o, t) })
            .collect();
        let payload = StatePayload {
            pose: PlanarPose { x: st.x, y: st.y, yaw: st.theta },
            twist: Twist { v: self.last_twist.v, w: self.last_twist.w },
            tracker,
            running: self.running,
            recording: self.recording.is_some(),
            ack: self.ack,
            frames: self.sim.summary().frames,
            movers,
        };
        self.hub.registry.lock().expect("registry lock").t_sim = t;
        self.hub.broadcast("state", t, serde_json::to_value(payload).expect("state serializes"));
    }
}
