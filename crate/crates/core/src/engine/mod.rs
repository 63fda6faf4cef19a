//! Fixed-step simulation loop.
//!
//! Every tick runs control, kinematics, ground truth, IMU and LIDAR in that
//! order. Tick `k` ends at `t = k * base_dt`; ground truth and IMU samples
//! carry that end time. A LIDAR frame covers `[j T, (j + 1) T)` and is
//! synthesized on the tick that closes it, from the buffered tick states.

mod config;

use serde::{Deserialize, Serialize};
use std::collections::VecDeque;
use std::sync::Arc;

pub use config::{LidarConfig, ModeKind, RunConfig, StartPose};

use crate::control::{
    build_spline, pure_pursuit_step, teleop_update, SplinePath, TrackError, TrackerState,
};
use crate::kinematics::{achievable_twist, body_pose, propagate, PlanarTwist, RobotState};
use crate::pose::Pose;
use crate::scene::{load_scene_spec, Scene, SceneError};
use crate::sensors::{
    imu_rng, simulate_imu, simulate_lidar_frame, FrameRequest, ImuSample, LidarModel, PointCloudFrame,
    SensorError,
};
use nalgebra::Vector2;

#[derive(Debug, thiserror::Error)]
pub enum EngineError {
    #[error("invalid run config: {0}")]
    Config(String),
    #[error(transparent)]
    Scene(#[from] SceneError),
    #[error(transparent)]
    Sensor(#[from] SensorError),
    #[error("tracker did not reach the path end within {0} s")]
    TrackerTimeout(f64),
    #[error("command log line {line}: {message}")]
    CommandLog { line: usize, message: String },
    #[error("t = {t} s is outside the frame window [{start}, {end}]")]
    OutsideWindow { t: f64, start: f64, end: f64 },
    #[error("simulation already finished")]
    Finished,
    #[error("output: {0}")]
    Sink(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthSample {
    pub t: f64,
    /// Body frame in the world.
    pub pose: Pose,
    pub twist: PlanarTwist,
}

/// One applied command change: from time `t` on the robot holds `(v, w)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CommandRecord {
    pub t: f64,
    pub v: f64,
    pub w: f64,
}

/// Shortest round-trip formatting, so replayed logs are bit-exact.
pub fn format_command_log(records: &[CommandRecord]) -> String {
    records
        .iter()
        .map(|r| format!("{} {} {}\n", r.t, r.v, r.w))
        .collect()
}

/// Lines `t v w`; blank lines and `#` comments are skipped. Times must not
/// decrease.
pub fn parse_command_log(text: &str) -> Result<Vec<CommandRecord>, EngineError> {
    let mut out: Vec<CommandRecord> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let err = |message: String| EngineError::CommandLog { line: i + 1, message };
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 3 {
            return Err(err(format!("expected `t v w`, got {} fields", fields.len())));
        }
        let mut nums = [0.0; 3];
        for (slot, f) in nums.iter_mut().zip(&fields) {
            *slot = f
                .parse::<f64>()
                .ok()
                .filter(|x| x.is_finite())
                .ok_or_else(|| err(format!("`{f}` is not a finite number")))?;
        }
        let rec = CommandRecord { t: nums[0], v: nums[1], w: nums[2] };
        if out.last().is_some_and(|p| rec.t < p.t) {
            return Err(err("timestamps go backwards".into()));
        }
        out.push(rec);
    }
    Ok(out)
}

/// Inputs accepted between ticks.
#[derive(Debug, Clone, PartialEq)]
pub enum ControlEvent {
    /// Teleop key or action name.
    Key(String),
    /// Direct teleop twist, clamped to the teleop limits.
    Twist(PlanarTwist),
    /// Start tracking a new path through these waypoints.
    Waypoints(Vec<[f64; 2]>),
    /// Zero the command and drop any active path.
    Stop,
}

/// Per-tick stage markers, recorded when enabled.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EngineEvent {
    Control { tick: u64 },
    Kinematics { tick: u64 },
    GroundTruth { tick: u64 },
    Imu { tick: u64 },
    Lidar { tick: u64, frame: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Duration,
    TrackerFinished,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub ticks: u64,
    pub sim_time: f64,
    pub ground_truth_samples: u64,
    pub imu_samples: u64,
    pub frames: u64,
    pub lidar_points: u64,
    /// Planar path length of the ground truth, m.
    pub distance: f64,
    pub stop_reason: StopReason,
}

/// Tick states of the current LIDAR frame. Entry `i` is the state at the
/// start of tick `i` of the window together with the twist held over it.
#[derive(Debug, Clone)]
pub struct FrameWindow {
    t0: f64,
    dt: f64,
    z0: f64,
    mount: Pose,
    ticks: Vec<(RobotState, PlanarTwist)>,
}

impl FrameWindow {
    fn new(t0: f64, dt: f64, z0: f64, mount: Pose) -> Self {
        Self { t0, dt, z0, mount, ticks: Vec::new() }
    }

    pub fn start(&self) -> f64 {
        self.t0
    }

    pub fn end(&self) -> f64 {
        self.t0 + self.ticks.len() as f64 * self.dt
    }

    /// Exact body pose at `t`: arc propagation from the last tick state at or
    /// before `t` under the twist held over that tick.
    pub fn body_pose_at(&self, t: f64) -> Result<Pose, EngineError> {
        let slack = 1e-9 * self.dt;
        if self.ticks.is_empty() || t < self.t0 - slack || t > self.end() + slack {
            return Err(EngineError::OutsideWindow { t, start: self.t0, end: self.end() });
        }
        let r = (t - self.t0) / self.dt;
        let snapped = if (r - r.round()).abs() < 1e-9 { r.round() } else { r.floor() };
        let i = (snapped.max(0.0) as usize).min(self.ticks.len() - 1);
        let (s, cmd) = &self.ticks[i];
        let tau = t - s.t;
        let s = if tau > slack { propagate(s, *cmd, tau) } else { *s };
        Ok(body_pose(&s, self.z0))
    }

    pub fn sensor_pose_at(&self, t: f64) -> Result<Pose, EngineError> {
        Ok(self.body_pose_at(t)?.compose(&self.mount))
    }
}

enum Controller {
    Teleop { twist: PlanarTwist },
    Track { path: Arc<SplinePath>, tracker: TrackerState },
    Scripted { commands: Vec<CommandRecord>, next: usize, twist: PlanarTwist },
}

/// What one tick produced.
#[derive(Debug, Clone)]
pub struct TickOutput {
    pub tick: u64,
    pub ground_truth: GroundTruthSample,
    pub imu: Option<ImuSample>,
    pub frame: Option<PointCloudFrame>,
    /// Present when the applied command changed at the start of this tick.
    pub command: Option<CommandRecord>,
}

pub struct Simulation {
    config: RunConfig,
    scene: Arc<Scene>,
    lidar: LidarModel,
    state: RobotState,
    tick: u64,
    total_ticks: u64,
    imu_ratio: u64,
    lidar_ratio: u64,
    controller: Controller,
    applied: Option<PlanarTwist>,
    pending: VecDeque<ControlEvent>,
    window: FrameWindow,
    frames: u64,
    imu_samples: u64,
    lidar_points: u64,
    distance: f64,
    finished: Option<StopReason>,
    /// Batch runs end when the tracker finishes; interactive runs fall back
    /// to teleop.
    stop_on_track_finish: bool,
    events: Option<Vec<EngineEvent>>,
}

impl Simulation {
    /// Validate the config, load its scene and any path or command file.
    pub fn new(config: RunConfig) -> Result<Simulation, EngineError> {
        config.validate()?;
        let scene = Arc::new(load_scene_spec(&config.scene_spec())?);
        Self::with_scene(config, scene)
    }

    pub fn with_scene(config: RunConfig, scene: Arc<Scene>) -> Result<Simulation, EngineError> {
        config.validate()?;
        let lidar = config.lidar.resolve()?;
        let imu_ratio = config::whole_ratio(config.imu.period(), config.base_dt).expect("validated");
        let lidar_ratio = config::whole_ratio(lidar.frame_period(), config.base_dt).expect("validated");
        let start = RobotState::at(config.start.x, config.start.y, config.start.yaw_deg.to_radians());
        let controller = match config.mode {
            ModeKind::Teleop => Controller::Teleop { twist: PlanarTwist::ZERO },
            ModeKind::Track => {
                let pts = config.waypoints()?.unwrap_or_default();
                Self::track_controller(&config, &pts, &start)?
            }
            ModeKind::Scripted => {
                let file = config.command_file.as_deref().unwrap_or_default();
                let path = config.resolve_path(file);
                let text = std::fs::read_to_string(&path)
                    .map_err(|e| EngineError::Config(format!("{}: {e}", path.display())))?;
                Controller::Scripted {
                    commands: parse_command_log(&text)?,
                    next: 0,
                    twist: PlanarTwist::ZERO,
                }
            }
        };
        let window = FrameWindow::new(0.0, config.base_dt, config.z0, lidar.mount);
        Ok(Simulation {
            total_ticks: config.tick_count(),
            scene,
            lidar,
            state: start,
            tick: 0,
            imu_ratio,
            lidar_ratio,
            controller,
            applied: None,
            pending: VecDeque::new(),
            window,
            frames: 0,
            imu_samples: 0,
            lidar_points: 0,
            distance: 0.0,
            finished: None,
            stop_on_track_finish: true,
            events: None,
            config,
        })
    }

    fn track_controller(
        config: &RunConfig,
        points: &[[f64; 2]],
        state: &RobotState,
    ) -> Result<Controller, EngineError> {
        let pts: Vec<Vector2<f64>> = points.iter().map(|p| Vector2::new(p[0], p[1])).collect();
        let path = build_spline(&pts).map_err(|e| EngineError::Config(e.to_string()))?;
        let gap = (path.start() - Vector2::new(state.x, state.y)).norm();
        if gap > crate::control::pursuit::START_WARNING_DISTANCE {
            log::warn!("robot starts {gap:.3} m from the path start");
        }
        Ok(Controller::Track {
            path: Arc::new(path),
            tracker: TrackerState::new(config.tracker),
        })
    }

    /// Record per-tick stage markers from now on.
    pub fn record_events(&mut self) {
        self.events = Some(Vec::new());
    }

    pub fn events(&self) -> &[EngineEvent] {
        self.events.as_deref().unwrap_or(&[])
    }

    /// Keep running (in teleop) after a path has been tracked.
    pub fn set_interactive(&mut self) {
        self.stop_on_track_finish = false;
        self.total_ticks = u64::MAX;
    }

    pub fn config(&self) -> &RunConfig {
        &self.config
    }

    pub fn scene(&self) -> &Arc<Scene> {
        &self.scene
    }

    pub fn lidar(&self) -> &LidarModel {
        &self.lidar
    }

    pub fn state(&self) -> &RobotState {
        &self.state
    }

    pub fn time(&self) -> f64 {
        self.state.t
    }

    pub fn tick_index(&self) -> u64 {
        self.tick
    }

    pub fn is_finished(&self) -> bool {
        self.finished.is_some()
    }

    /// Twist that will be held over the next tick if no event arrives.
    pub fn current_command(&self) -> PlanarTwist {
        self.applied.unwrap_or(PlanarTwist::ZERO)
    }

    pub fn path(&self) -> Option<&Arc<SplinePath>> {
        match &self.controller {
            Controller::Track { path, .. } => Some(path),
            _ => None,
        }
    }

    pub fn tracker(&self) -> Option<&TrackerState> {
        match &self.controller {
            Controller::Track { tracker, .. } => Some(tracker),
            _ => None,
        }
    }

    /// Queue an input for the next tick.
    pub fn push_event(&mut self, ev: ControlEvent) {
        self.pending.push_back(ev);
    }

    /// Current LIDAR frame window, for intra-frame pose queries.
    pub fn window(&self) -> &FrameWindow {
        &self.window
    }

    pub fn summary(&self) -> RunSummary {
        RunSummary {
            ticks: self.tick,
            sim_time: self.state.t,
            ground_truth_samples: self.tick,
            imu_samples: self.imu_samples,
            frames: self.frames,
            lidar_points: self.lidar_points,
            distance: self.distance,
            stop_reason: self.finished.unwrap_or(StopReason::Duration),
        }
    }

    fn apply_events(&mut self) -> Result<(), EngineError> {
        while let Some(ev) = self.pending.pop_front() {
            match ev {
                ControlEvent::Key(key) => {
                    let current = self.current_teleop_twist();
                    if let Some(tw) = teleop_update(current, &key, &self.config.teleop) {
                        self.controller = Controller::Teleop { twist: tw };
                    } else {
                        log::debug!("ignoring unmapped key `{key}`");
                    }
                }
                ControlEvent::Twist(tw) => {
                    let c = &self.config.teleop;
                    let tw = PlanarTwist::new(tw.v.clamp(-c.v_max, c.v_max), tw.w.clamp(-c.w_max, c.w_max));
                    self.controller = Controller::Teleop { twist: tw };
                }
                ControlEvent::Waypoints(points) => {
                    self.controller = Self::track_controller(&self.config, &points, &self.state)?;
                }
                ControlEvent::Stop => {
                    self.controller = Controller::Teleop { twist: PlanarTwist::ZERO };
                }
            }
        }
        Ok(())
    }

    fn current_teleop_twist(&self) -> PlanarTwist {
        match &self.controller {
            Controller::Teleop { twist } => *twist,
            _ => self.current_command(),
        }
    }

    /// Command for the tick starting now, or `None` when the tracker finished.
    fn control(&mut self) -> Result<Option<PlanarTwist>, EngineError> {
        self.apply_events()?;
        let now = self.state.t;
        let slack = 1e-9 * self.config.base_dt;
        match &mut self.controller {
            Controller::Teleop { twist } => Ok(Some(*twist)),
            Controller::Scripted { commands, next, twist } => {
                while *next < commands.len() && commands[*next].t <= now + slack {
                    let c = commands[*next];
                    *twist = PlanarTwist::new(c.v, c.w);
                    *next += 1;
                }
                Ok(Some(*twist))
            }
            Controller::Track { path, tracker } => {
                match pure_pursuit_step(&self.state, path, tracker) {
                    Ok((cmd, next)) => {
                        *tracker = next;
                        if next.finished {
                            return Ok(None);
                        }
                        Ok(Some(cmd))
                    }
                    Err(TrackError::Finished) => Ok(None),
                    Err(e) => Err(EngineError::Config(e.to_string())),
                }
            }
        }
    }

    fn mark(&mut self, ev: EngineEvent) {
        if let Some(log) = &mut self.events {
            log.push(ev);
        }
    }

    /// Advance one tick. Returns `None` once the run is over.
    pub fn tick(&mut self) -> Result<Option<TickOutput>, EngineError> {
        if self.finished.is_some() {
            return Ok(None);
        }
        if self.tick >= self.total_ticks {
            if let Controller::Track { tracker, .. } = &self.controller {
                if self.stop_on_track_finish && !tracker.finished {
                    self.finished = Some(StopReason::Duration);
                    return Err(EngineError::TrackerTimeout(self.config.duration));
                }
            }
            self.finished = Some(StopReason::Duration);
            return Ok(None);
        }
        let k = self.tick + 1;

        // control
        let cmd = match self.control()? {
            Some(cmd) => cmd,
            None if self.stop_on_track_finish => {
                self.finished = Some(StopReason::TrackerFinished);
                return Ok(None);
            }
            None => {
                self.controller = Controller::Teleop { twist: PlanarTwist::ZERO };
                PlanarTwist::ZERO
            }
        };
        let applied = achievable_twist(cmd, &self.config.chassis);
        let command = (self.applied != Some(applied)).then(|| CommandRecord {
            t: self.state.t,
            v: applied.v,
            w: applied.w,
        });
        self.applied = Some(applied);
        self.mark(EngineEvent::Control { tick: k });

        // kinematics
        let prev = self.state;
        self.window.ticks.push((prev, applied));
        let mut next = propagate(&prev, applied, self.config.base_dt);
        next.t = k as f64 * self.config.base_dt;
        self.distance += ((next.x - prev.x).powi(2) + (next.y - prev.y).powi(2)).sqrt();
        self.state = next;
        self.tick = k;
        self.mark(EngineEvent::Kinematics { tick: k });

        // ground truth
        let ground_truth = GroundTruthSample {
            t: next.t,
            pose: body_pose(&next, self.config.z0),
            twist: applied,
        };
        self.mark(EngineEvent::GroundTruth { tick: k });

        // imu
        let imu = if k % self.imu_ratio == 0 {
            let index = k / self.imu_ratio;
            let mut rng = imu_rng(self.config.seed, index);
            let s = simulate_imu(&prev, &next, &self.config.imu, Some(&mut rng))?;
            self.imu_samples += 1;
            self.mark(EngineEvent::Imu { tick: k });
            Some(s)
        } else {
            None
        };

        // lidar
        let frame = if k % self.lidar_ratio == 0 {
            let index = k / self.lidar_ratio - 1;
            let req = FrameRequest {
                scene: &self.scene,
                model: &self.lidar,
                frame_index: index,
                t0: self.window.t0,
                seed: self.config.seed,
                mover_sampling: self.config.lidar.mover_sampling,
            };
            let window = &self.window;
            let frame = simulate_lidar_frame(&req, |t| {
                window.body_pose_at(t).expect("beam times lie inside the frame window")
            })?;
            self.frames += 1;
            self.lidar_points += frame.points.len() as u64;
            self.window = FrameWindow::new(next.t, self.config.base_dt, self.config.z0, self.lidar.mount);
            self.mark(EngineEvent::Lidar { tick: k, frame: index });
            Some(frame)
        } else {
            None
        };

        Ok(Some(TickOutput { tick: k, ground_truth, imu, frame, command }))
    }
}

/// Receiver for the streams of a run.
pub trait SimSink {
    fn ground_truth(&mut self, s: &GroundTruthSample) -> Result<(), EngineError>;
    fn imu(&mut self, s: &ImuSample) -> Result<(), EngineError>;
    fn frame(&mut self, f: &PointCloudFrame) -> Result<(), EngineError>;
    fn command(&mut self, c: &CommandRecord) -> Result<(), EngineError>;
}

/// Keeps every stream in memory.
#[derive(Debug, Clone, Default)]
pub struct MemorySink {
    pub ground_truth: Vec<GroundTruthSample>,
    pub imu: Vec<ImuSample>,
    pub frames: Vec<PointCloudFrame>,
    pub commands: Vec<CommandRecord>,
}

impl SimSink for MemorySink {
    fn ground_truth(&mut self, s: &GroundTruthSample) -> Result<(), EngineError> {
        self.ground_truth.push(*s);
        Ok(())
    }
    fn imu(&mut self, s: &ImuSample) -> Result<(), EngineError> {
        self.imu.push(*s);
        Ok(())
    }
    fn frame(&mut self, f: &PointCloudFrame) -> Result<(), EngineError> {
        self.frames.push(f.clone());
        Ok(())
    }
    fn command(&mut self, c: &CommandRecord) -> Result<(), EngineError> {
        self.commands.push(*c);
        Ok(())
    }
}

/// Forward one tick's output to a sink.
pub fn emit(out: &TickOutput, sink: &mut dyn SimSink) -> Result<(), EngineError> {
    if let Some(c) = &out.command {
        sink.command(c)?;
    }
    sink.ground_truth(&out.ground_truth)?;
    if let Some(s) = &out.imu {
        sink.imu(s)?;
    }
    if let Some(f) = &out.frame {
        sink.frame(f)?;
    }
    Ok(())
}

/// Run to completion as fast as possible.
pub fn run(sim: &mut Simulation, sink: &mut dyn SimSink) -> Result<RunSummary, EngineError> {
    while let Some(out) = sim.tick()? {
        emit(&out, sink)?;
    }
    let summary = sim.summary();
    log::info!(
        "run finished: {} ticks, {} frames, {:.3} m travelled",
        summary.ticks,
        summary.frames,
        summary.distance
    );
    Ok(summary)
}
