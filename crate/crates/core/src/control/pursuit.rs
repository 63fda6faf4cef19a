//! Carrot-following tracker over a sampled spline path.
//!
//! The target is a single path sample. Each tick the robot steers toward it
//! with `w = clamp(K * alpha)` at a fixed cruise speed, and the target moves
//! on once the robot is within the switch threshold of it. A target that is
//! behind the robot and inside its turning diameter is also treated as
//! reached, since a unicycle at constant speed cannot close on it.

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

use super::spline::SplinePath;
use crate::kinematics::{step, PlanarTwist, RobotState};
use crate::pose::wrap_angle;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TrackError {
    #[error("tracker already finished")]
    Finished,
    #[error("tracker did not finish within {0} s of simulated time")]
    Timeout(f64),
    #[error("invalid tracker setting: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrackerConfig {
    /// m/s
    pub cruise_speed: f64,
    /// m
    pub switch_threshold: f64,
    /// 1/s
    pub heading_gain: f64,
    /// rad/s
    pub w_max: f64,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        Self {
            cruise_speed: 0.2,
            switch_threshold: 0.01,
            heading_gain: 2.0,
            w_max: 1.5,
        }
    }
}

impl TrackerConfig {
    pub fn validate(&self) -> Result<(), TrackError> {
        for (name, v) in [
            ("cruise_speed", self.cruise_speed),
            ("switch_threshold", self.switch_threshold),
            ("heading_gain", self.heading_gain),
            ("w_max", self.w_max),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(TrackError::Invalid(format!("`{name}` must be strictly positive")));
            }
        }
        Ok(())
    }

    /// Diameter of the tightest circle the robot can drive at cruise speed.
    pub fn turning_diameter(&self) -> f64 {
        2.0 * self.cruise_speed / self.w_max
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrackerState {
    pub target_index: usize,
    pub config: TrackerConfig,
    pub finished: bool,
}

impl TrackerState {
    pub fn new(config: TrackerConfig) -> Self {
        Self {
            target_index: 0,
            config,
            finished: false,
        }
    }
}

/// One control decision. Advances the target as needed and returns the
/// command together with the updated tracker state.
pub fn pure_pursuit_step(
    robot: &RobotState,
    path: &SplinePath,
    st: &TrackerState,
) -> Result<(PlanarTwist, TrackerState), TrackError> {
    if st.finished {
        return Err(TrackError::Finished);
    }
    let cfg = &st.config;
    let last = path.samples.len() - 1;
    let pos = Vector2::new(robot.x, robot.y);
    let capture = cfg.turning_diameter();
    let mut next = *st;

    loop {
        let target = path.samples[next.target_index];
        let delta = target - pos;
        let d = delta.norm();
        let alpha = wrap_angle(delta.y.atan2(delta.x) - robot.theta);
        let reached = d < cfg.switch_threshold
            || (d < capture && alpha.abs() > std::f64::consts::FRAC_PI_2);
        if reached && next.target_index < last {
            next.target_index += 1;
            continue;
        }
        if reached {
            next.finished = true;
            return Ok((PlanarTwist::ZERO, next));
        }
        let w = (cfg.heading_gain * alpha).clamp(-cfg.w_max, cfg.w_max);
        return Ok((PlanarTwist::new(cfg.cruise_speed, w), next));
    }
}

/// Distance from `p` to the path polyline, searched near `hint`.
pub fn cross_track_error(path: &SplinePath, p: &Vector2<f64>, hint: usize, window: usize) -> f64 {
    let lo = hint.saturating_sub(window);
    let hi = (hint + window).min(path.samples.len() - 1);
    let mut best = f64::INFINITY;
    for i in lo..hi.max(lo + 1).min(path.samples.len() - 1) {
        let a = path.samples[i];
        let b = path.samples[i + 1];
        let ab = b - a;
        let len2 = ab.norm_squared();
        let s = if len2 > 0.0 {
            ((p - a).dot(&ab) / len2).clamp(0.0, 1.0)
        } else {
            0.0
        };
        best = best.min((a + ab * s - p).norm());
    }
    best
}

/// Result of a standalone tracking run.
#[derive(Debug, Clone)]
pub struct TrackRun {
    pub final_state: RobotState,
    pub tracker: TrackerState,
    /// `(t, cross-track error)` per control tick.
    pub cross_track: Vec<(f64, f64)>,
    pub commands: Vec<PlanarTwist>,
    pub warnings: Vec<String>,
}

/// Start-of-path distance above which a warning is emitted.
pub const START_WARNING_DISTANCE: f64 = 0.5;

/// Drive the tracker with exact kinematics at a fixed control tick until it
/// finishes or `timeout` simulated seconds elapse.
pub fn track_path(
    path: &SplinePath,
    start: RobotState,
    config: TrackerConfig,
    dt: f64,
    timeout: f64,
) -> Result<TrackRun, TrackError> {
    config.validate()?;
    let mut warnings = Vec::new();
    let gap = (path.start() - Vector2::new(start.x, start.y)).norm();
    if gap > START_WARNING_DISTANCE {
        let msg = format!("robot starts {gap:.3} m from the path start");
        log::warn!("{msg}");
        warnings.push(msg);
    }
    let mut state = start;
    let mut tracker = TrackerState::new(config);
    let mut cross_track = Vec::new();
    let mut commands = Vec::new();
    let ticks = (timeout / dt).round() as usize;
    for _ in 0..ticks {
        let (cmd, next) = pure_pursuit_step(&state, path, &tracker)?;
        tracker = next;
        commands.push(cmd);
        if tracker.finished {
            return Ok(TrackRun {
                final_state: state,
                tracker,
                cross_track,
                commands,
                warnings,
            });
        }
        state = step(&state, cmd, dt).map_err(|e| TrackError::Invalid(e.to_string()))?;
        let p = Vector2::new(state.x, state.y);
        cross_track.push((state.t, cross_track_error(path, &p, tracker.target_index, 400)));
    }
    Err(TrackError::Timeout(timeout))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::control::spline::build_spline;
    use std::f64::consts::PI;

    fn straight() -> SplinePath {
        build_spline(&[Vector2::new(0.0, 0.0), Vector2::new(10.0, 0.0)]).unwrap()
    }

    #[test]
    fn aligned_target_goes_straight() {
        let path = straight();
        let mut st = TrackerState::new(TrackerConfig::default());
        st.target_index = 500; // (~1, 0)
        let (cmd, next) = pure_pursuit_step(&RobotState::default(), &path, &st).unwrap();
        assert_eq!(cmd, PlanarTwist::new(0.2, 0.0));
        assert_eq!(next.target_index, 500);
    }

    #[test]
    fn switches_inside_threshold() {
        let path = straight();
        let k = 1000;
        let target = path.samples[k];
        let robot = RobotState::at(target.x - 0.009, 0.0, 0.0);
        let mut st = TrackerState::new(TrackerConfig::default());
        st.target_index = k;
        let (_, next) = pure_pursuit_step(&robot, &path, &st).unwrap();
        assert!(next.target_index > k);
        // samples are 2 mm apart, so the new target is the first one 1 cm out or more
        let d = (path.samples[next.target_index] - Vector2::new(robot.x, robot.y)).norm();
        assert!(d >= 0.01);
        let prev = (path.samples[next.target_index - 1] - Vector2::new(robot.x, robot.y)).norm();
        assert!(prev < 0.01);
    }

    #[test]
    fn does_not_switch_outside_threshold() {
        let path = straight();
        let k = 1000;
        let robot = RobotState::at(path.samples[k].x - 0.011, 0.0, 0.0);
        let mut st = TrackerState::new(TrackerConfig::default());
        st.target_index = k;
        let (_, next) = pure_pursuit_step(&robot, &path, &st).unwrap();
        assert_eq!(next.target_index, k);
    }

    #[test]
    fn target_behind_saturates_positive() {
        let path = straight();
        let robot = RobotState::at(15.0, 0.0, 0.0);
        let mut st = TrackerState::new(TrackerConfig::default());
        st.target_index = 4000;
        let (cmd, _) = pure_pursuit_step(&robot, &path, &st).unwrap();
        assert_eq!(cmd.w, 1.5);
        assert_eq!(cmd.v, 0.2);
    }

    #[test]
    fn finished_tracker_errors() {
        let path = straight();
        let mut st = TrackerState::new(TrackerConfig::default());
        st.target_index = 4999;
        let robot = RobotState::at(10.0 - 0.005, 0.0, 0.0);
        let (cmd, next) = pure_pursuit_step(&robot, &path, &st).unwrap();
        assert!(next.finished);
        assert_eq!(cmd, PlanarTwist::ZERO);
        assert_eq!(pure_pursuit_step(&robot, &path, &next), Err(TrackError::Finished));
    }

    #[test]
    fn straight_run_time_and_endpoint() {
        let path = straight();
        let run = track_path(&path, RobotState::default(), TrackerConfig::default(), 0.005, 120.0)
            .unwrap();
        let t = run.final_state.t;
        // length / speed, less the final switch threshold
        assert!((t - 50.0).abs() < 0.1, "t = {t}");
        let end = Vector2::new(run.final_state.x, run.final_state.y);
        assert!((end - path.end()).norm() < 0.01);
        assert!(run.warnings.is_empty());
        // invariants along the run
        assert!(run.commands.iter().all(|c| c.w.abs() <= 1.5 && (c.v == 0.0 || c.v == 0.2)));
    }

    #[test]
    fn far_start_warns_and_converges() {
        let ctrl: Vec<Vector2<f64>> = (0..=16)
            .map(|i| {
                let a = i as f64 * 2.0 * PI / 16.0;
                Vector2::new(5.0 * a.cos(), 5.0 * a.sin())
            })
            .collect();
        let path = build_spline(&ctrl).unwrap();
        let start = RobotState::at(path.start().x + 10.0, path.start().y, 0.0);
        let run = track_path(&path, start, TrackerConfig::default(), 0.005, 600.0).unwrap();
        assert_eq!(run.warnings.len(), 1);
        assert!(run.tracker.finished);
        let tail = &run.cross_track[run.cross_track.len() * 3 / 4..];
        assert!(tail.iter().all(|&(_, e)| e < 0.05));
    }

    #[test]
    fn deterministic_commands() {
        let path = build_spline(&[
            Vector2::new(0.0, 0.0),
            Vector2::new(2.0, 1.0),
            Vector2::new(4.0, -1.0),
            Vector2::new(6.0, 0.0),
        ])
        .unwrap();
        let a = track_path(&path, RobotState::default(), TrackerConfig::default(), 0.005, 100.0).unwrap();
        let b = track_path(&path, RobotState::default(), TrackerConfig::default(), 0.005, 100.0).unwrap();
        assert_eq!(a.commands, b.commands);
    }
}
