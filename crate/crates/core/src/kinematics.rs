//! Differential-drive chassis: wheel/twist maps and exact planar integration.

use serde::{Deserialize, Serialize};

use crate::pose::{wrap_angle, Pose};

/// Below this yaw rate a step is integrated as a straight line.
pub const STRAIGHT_LINE_YAW_RATE: f64 = 1e-9;
/// Largest accepted integration step, seconds.
pub const MAX_STEP: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum KinematicsError {
    #[error("step dt must satisfy 0 < dt <= {MAX_STEP}, got {0}")]
    BadStep(f64),
    #[error("chassis parameter `{0}` must be strictly positive")]
    BadParam(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChassisParams {
    /// Drive wheel radius, m.
    pub wheel_radius: f64,
    /// Distance between the drive wheels, m.
    pub track_width: f64,
    /// rad/s
    pub max_wheel_speed: f64,
}

impl Default for ChassisParams {
    fn default() -> Self {
        Self {
            wheel_radius: 0.04,
            track_width: 0.30,
            max_wheel_speed: 20.0,
        }
    }
}

impl ChassisParams {
    pub fn validate(&self) -> Result<(), KinematicsError> {
        for (name, v) in [
            ("wheel_radius", self.wheel_radius),
            ("track_width", self.track_width),
            ("max_wheel_speed", self.max_wheel_speed),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(KinematicsError::BadParam(name));
            }
        }
        Ok(())
    }
}

/// Forward speed (m/s) and yaw rate (rad/s).
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct PlanarTwist {
    pub v: f64,
    pub w: f64,
}

impl PlanarTwist {
    pub const ZERO: PlanarTwist = PlanarTwist { v: 0.0, w: 0.0 };

    pub fn new(v: f64, w: f64) -> Self {
        Self { v, w }
    }
}

/// Wheel angular speeds, rad/s.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct WheelSpeeds {
    pub left: f64,
    pub right: f64,
}

/// Inverse kinematics, saturating at `max_wheel_speed` while keeping the
/// left/right ratio (and so the path curvature).
pub fn twist_to_wheels(tw: PlanarTwist, p: &ChassisParams) -> WheelSpeeds {
    let half_track = tw.w * p.track_width / 2.0;
    let mut left = (tw.v - half_track) / p.wheel_radius;
    let mut right = (tw.v + half_track) / p.wheel_radius;
    let peak = left.abs().max(right.abs());
    if peak > p.max_wheel_speed {
        let k = p.max_wheel_speed / peak;
        left *= k;
        right *= k;
    }
    WheelSpeeds { left, right }
}

pub fn wheels_to_twist(ws: WheelSpeeds, p: &ChassisParams) -> PlanarTwist {
    PlanarTwist {
        v: p.wheel_radius * (ws.left + ws.right) / 2.0,
        w: p.wheel_radius * (ws.right - ws.left) / p.track_width,
    }
}

/// The twist the chassis actually executes for a commanded twist.
pub fn achievable_twist(cmd: PlanarTwist, p: &ChassisParams) -> PlanarTwist {
    let half_track = cmd.w * p.track_width / 2.0;
    let peak = (cmd.v - half_track).abs().max((cmd.v + half_track).abs()) / p.wheel_radius;
    if peak <= p.max_wheel_speed {
        // unsaturated commands pass through bit-exact
        cmd
    } else {
        wheels_to_twist(twist_to_wheels(cmd, p), p)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct RobotState {
    pub x: f64,
    pub y: f64,
    /// Heading in `(-pi, pi]`.
    pub theta: f64,
    pub twist: PlanarTwist,
    pub t: f64,
}

impl RobotState {
    pub fn at(x: f64, y: f64, theta: f64) -> Self {
        Self {
            x,
            y,
            theta: wrap_angle(theta),
            twist: PlanarTwist::ZERO,
            t: 0.0,
        }
    }
}

/// Planar displacement of a unicycle holding `(v, w)` for `dt`, starting at
/// heading `theta`. Uses the chord form `v dt sinc(w dt / 2)` along
/// `theta + w dt / 2`, which equals the arc formula and stays accurate as
/// `w -> 0`.
pub fn arc_displacement(theta: f64, v: f64, w: f64, dt: f64) -> (f64, f64) {
    if w.abs() < STRAIGHT_LINE_YAW_RATE {
        return (v * theta.cos() * dt, v * theta.sin() * dt);
    }
    let half = w * dt / 2.0;
    let sinc = if half.abs() < 1e-4 {
        1.0 - half * half / 6.0 + half.powi(4) / 120.0
    } else {
        half.sin() / half
    };
    let chord = v * dt * sinc;
    let mid = theta + half;
    (chord * mid.cos(), chord * mid.sin())
}

/// Advance the state by `dt` under a constant twist, exactly.
pub fn step(s: &RobotState, cmd: PlanarTwist, dt: f64) -> Result<RobotState, KinematicsError> {
    if !(dt > 0.0 && dt <= MAX_STEP) {
        return Err(KinematicsError::BadStep(dt));
    }
    Ok(propagate(s, cmd, dt))
}

/// [`step`] without the step-size precondition; used for sub-tick queries.
pub fn propagate(s: &RobotState, cmd: PlanarTwist, dt: f64) -> RobotState {
    let (dx, dy) = arc_displacement(s.theta, cmd.v, cmd.w, dt);
    RobotState {
        x: s.x + dx,
        y: s.y + dy,
        theta: wrap_angle(s.theta + cmd.w * dt),
        twist: cmd,
        t: s.t + dt,
    }
}

/// Body pose in the world: planar state at height `z0`, yaw only.
pub fn body_pose(s: &RobotState, z0: f64) -> Pose {
    Pose::planar(s.x, s.y, z0, s.theta)
}

/// Sensor pose in the world for a mount given in the body frame.
pub fn lift_to_pose3(s: &RobotState, z0: f64, sensor_mount: &Pose) -> Pose {
    body_pose(s, z0).compose(sensor_mount)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    const P: ChassisParams = ChassisParams {
        wheel_radius: 0.04,
        track_width: 0.30,
        max_wheel_speed: 20.0,
    };

    #[test]
    fn straight_and_spin_wheel_speeds() {
        let ws = twist_to_wheels(PlanarTwist::new(0.2, 0.0), &P);
        assert!((ws.left - 5.0).abs() < 1e-12 && (ws.right - 5.0).abs() < 1e-12);
        let ws = twist_to_wheels(PlanarTwist::new(0.0, 1.0), &P);
        assert!((ws.left + 3.75).abs() < 1e-12 && (ws.right - 3.75).abs() < 1e-12);
    }

    #[test]
    fn wheel_speeds_to_twist() {
        let tw = wheels_to_twist(WheelSpeeds { left: 5.0, right: 5.0 }, &P);
        assert!((tw.v - 0.2).abs() < 1e-12 && tw.w == 0.0);
        let tw = wheels_to_twist(WheelSpeeds { left: -3.0, right: 3.0 }, &P);
        assert_eq!(tw.v, 0.0);
    }

    #[test]
    fn clamping_preserves_curvature() {
        let cmd = PlanarTwist::new(1.5, 2.0);
        let ws = twist_to_wheels(cmd, &P);
        assert!(ws.left.abs() <= 20.0 + 1e-12 && ws.right.abs() <= 20.0 + 1e-12);
        let tw = wheels_to_twist(ws, &P);
        assert!((tw.w / tw.v - cmd.w / cmd.v).abs() < 1e-12);
        assert_eq!(achievable_twist(PlanarTwist::new(0.2, 0.3), &P), PlanarTwist::new(0.2, 0.3));
    }

    #[test]
    fn straight_step() {
        let s = step(&RobotState::default(), PlanarTwist::new(0.2, 0.0), 1.0 / 10.0).unwrap();
        assert!((s.x - 0.02).abs() < 1e-15);
        let mut s = RobotState::default();
        for _ in 0..10 {
            s = step(&s, PlanarTwist::new(0.2, 0.0), 0.1).unwrap();
        }
        assert!((s.x - 0.2).abs() < 1e-12 && s.y == 0.0 && s.theta == 0.0);
    }

    #[test]
    fn rejects_bad_dt() {
        assert_eq!(
            step(&RobotState::default(), PlanarTwist::ZERO, 0.0),
            Err(KinematicsError::BadStep(0.0))
        );
        assert!(step(&RobotState::default(), PlanarTwist::ZERO, 0.2).is_err());
    }

    #[test]
    fn circle_closes() {
        // radius v/w = 1 m, period 2 pi / w
        let cmd = PlanarTwist::new(0.2, 0.2);
        let period = 2.0 * PI / 0.2;
        let dt = 1e-3;
        let mut s = RobotState::default();
        let full = (period / dt).floor() as usize;
        for _ in 0..full {
            s = step(&s, cmd, dt).unwrap();
        }
        s = step(&s, cmd, period - s.t).unwrap();
        assert!((s.x.powi(2) + s.y.powi(2)).sqrt() < 1e-6, "{s:?}");
        // analytic midpoint: after half a period the robot is at (0, 2)
        let half = step(&RobotState::default(), cmd, 0.1)
            .map(|mut s| {
                while s.t + 0.1 <= period / 2.0 {
                    s = step(&s, cmd, 0.1).unwrap();
                }
                step(&s, cmd, period / 2.0 - s.t).unwrap()
            })
            .unwrap();
        assert!(half.x.abs() < 1e-9 && (half.y - 2.0).abs() < 1e-9);
    }

    #[test]
    fn mount_composition() {
        let m = Pose::from_translation(0.15, 0.0, 0.25);
        let p = lift_to_pose3(&RobotState::at(0.0, 0.0, 0.0), 0.1, &m);
        assert!((p.position - nalgebra::Vector3::new(0.15, 0.0, 0.35)).norm() < 1e-12);
        let p = lift_to_pose3(&RobotState::at(0.0, 0.0, PI), 0.1, &m);
        assert!((p.position - nalgebra::Vector3::new(-0.15, 0.0, 0.35)).norm() < 1e-12);
        let p = lift_to_pose3(&RobotState::at(1.0, 2.0, PI / 2.0), 0.1, &Pose::identity());
        assert!((p.position - nalgebra::Vector3::new(1.0, 2.0, 0.1)).norm() < 1e-12);
        assert!((p.yaw() - PI / 2.0).abs() < 1e-12);
    }

    #[test]
    fn straight_line_limit_is_continuous() {
        let s = RobotState::at(0.3, -0.2, 0.7);
        let a = step(&s, PlanarTwist::new(0.5, 0.0), 0.1).unwrap();
        let b = step(&s, PlanarTwist::new(0.5, 1e-9), 0.1).unwrap();
        assert!(((a.x - b.x).powi(2) + (a.y - b.y).powi(2)).sqrt() < 1e-9);
    }

    proptest! {
        #[test]
        fn wheel_round_trip(v in -0.7..0.7f64, w in -2.0..2.0f64) {
            let tw = PlanarTwist::new(v, w);
            let ws = twist_to_wheels(tw, &P);
            prop_assume!(ws.left.abs() < 20.0 && ws.right.abs() < 20.0);
            let back = wheels_to_twist(ws, &P);
            prop_assert!((back.v - v).abs() < 1e-12 && (back.w - w).abs() < 1e-12);
        }

        #[test]
        fn wheels_round_trip(l in -20.0..20.0f64, r in -20.0..20.0f64) {
            let ws = WheelSpeeds { left: l, right: r };
            let back = twist_to_wheels(wheels_to_twist(ws, &P), &P);
            prop_assert!((back.left - l).abs() < 1e-9 && (back.right - r).abs() < 1e-9);
        }

        #[test]
        fn half_steps_compose(x in -5.0..5.0f64, y in -5.0..5.0f64, th in -3.1..3.1f64,
                              v in -1.0..1.0f64, w in -3.0..3.0f64, dt in 0.001..0.1f64) {
            let s = RobotState::at(x, y, th);
            let cmd = PlanarTwist::new(v, w);
            let one = step(&s, cmd, dt).unwrap();
            let two = step(&step(&s, cmd, dt / 2.0).unwrap(), cmd, dt / 2.0).unwrap();
            prop_assert!((one.x - two.x).abs() < 1e-12 && (one.y - two.y).abs() < 1e-12);
            prop_assert!(wrap_angle(one.theta - two.theta).abs() < 1e-12);
            prop_assert!(one.theta > -PI && one.theta <= PI);
        }
    }
}
