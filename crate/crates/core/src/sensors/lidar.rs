use nalgebra::Vector3;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use super::{stream_rng, SensorError, LIDAR_STREAM};
use crate::pose::Pose;
use crate::scene::Scene;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PatternKind {
    Mechanical,
    Risley,
}

/// Two counter-rotating prisms. Frequencies in Hz, phase in radians.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RisleyParams {
    pub f1: f64,
    pub f2: f64,
    pub phase0: f64,
}

impl Default for RisleyParams {
    fn default() -> Self {
        Self {
            f1: 121.45,
            f2: -77.73,
            phase0: 0.0,
        }
    }
}

/// Whether movers are re-posed for every beam or once per frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MoverSampling {
    #[default]
    PerPoint,
    PerFrame,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LidarModel {
    pub name: String,
    pub pattern: PatternKind,
    /// Horizontal field of view, degrees.
    pub fov_h: f64,
    /// Vertical field of view, degrees.
    pub fov_v: f64,
    /// Lowest ring elevation for mechanical sensors, degrees.
    pub elevation_min: f64,
    /// Ring count for mechanical sensors.
    pub channels: usize,
    /// points/s
    pub point_rate: f64,
    /// m
    pub max_range: f64,
    /// Hz
    pub frame_rate: f64,
    /// m
    pub range_noise_sigma: f64,
    /// Sensor pose in the body frame.
    pub mount: Pose,
    pub risley: RisleyParams,
}

/// Names accepted by [`LidarModel::builtin`].
pub const BUILTIN_LIDARS: [&str; 4] = ["velodyne32", "avia", "hap", "horizon"];

const DEFAULT_MOUNT_HEIGHT: f64 = 0.25;

impl LidarModel {
    fn risley(name: &str, fov_h: f64, fov_v: f64, point_rate: f64, max_range: f64) -> Self {
        Self {
            name: name.to_string(),
            pattern: PatternKind::Risley,
            fov_h,
            fov_v,
            elevation_min: -fov_v / 2.0,
            channels: 1,
            point_rate,
            max_range,
            frame_rate: 10.0,
            range_noise_sigma: 0.01,
            mount: Pose::from_translation(0.0, 0.0, DEFAULT_MOUNT_HEIGHT),
            risley: RisleyParams::default(),
        }
    }

    pub fn builtin(name: &str) -> Option<LidarModel> {
        Some(match name {
            "velodyne32" => Self {
                name: name.to_string(),
                pattern: PatternKind::Mechanical,
                fov_h: 360.0,
                fov_v: 41.34,
                elevation_min: -30.67,
                channels: 32,
                point_rate: 640_000.0,
                max_range: 100.0,
                frame_rate: 10.0,
                range_noise_sigma: 0.01,
                mount: Pose::from_translation(0.0, 0.0, DEFAULT_MOUNT_HEIGHT),
                risley: RisleyParams::default(),
            },
            "avia" => Self::risley(name, 70.4, 77.2, 240_000.0, 450.0),
            "hap" => Self::risley(name, 120.0, 25.0, 452_000.0, 150.0),
            "horizon" => Self::risley(name, 81.7, 25.1, 240_000.0, 260.0),
            _ => return None,
        })
    }

    /// Samples per frame: `floor(point_rate / frame_rate)`.
    pub fn budget(&self) -> usize {
        (self.point_rate / self.frame_rate).floor() as usize
    }

    pub fn frame_period(&self) -> f64 {
        1.0 / self.frame_rate
    }

    pub fn validate(&self) -> Result<(), SensorError> {
        let bad = |m: &str| Err(SensorError::InvalidModel(format!("{}: {m}", self.name)));
        if !(self.fov_h > 0.0 && self.fov_h <= 360.0) {
            return bad("fov_h must be in (0, 360]");
        }
        if !(self.fov_v > 0.0 && self.fov_v <= 180.0) {
            return bad("fov_v must be in (0, 180]");
        }
        for (field, v) in [
            ("point_rate", self.point_rate),
            ("max_range", self.max_range),
            ("frame_rate", self.frame_rate),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(&format!("{field} must be strictly positive"));
            }
        }
        if !(self.range_noise_sigma >= 0.0 && self.range_noise_sigma.is_finite()) {
            return bad("range_noise_sigma must be non-negative");
        }
        if self.budget() == 0 {
            return bad("point budget per frame is zero");
        }
        if self.pattern == PatternKind::Mechanical {
            if self.channels == 0 || self.budget() < self.channels {
                return Err(SensorError::BudgetTooSmall {
                    budget: self.budget(),
                    channels: self.channels,
                });
            }
            if self.elevation_min < -90.0 || self.elevation_min + self.fov_v > 90.0 {
                return bad("ring elevations must lie within [-90, 90]");
            }
        }
        Ok(())
    }

    pub fn pattern(&self, frame_index: u64) -> Result<Vec<BeamSample>, SensorError> {
        match self.pattern {
            PatternKind::Mechanical => mechanical_pattern(self),
            PatternKind::Risley => risley_pattern(self, frame_index),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BeamSample {
    /// Offset from the frame start, s.
    pub dt: f64,
    /// Unit direction in the sensor frame.
    pub direction: Vector3<f64>,
}

/// Unit vector at azimuth `az` and elevation `el` (radians) off the sensor x-axis.
pub fn spherical_direction(az: f64, el: f64) -> Vector3<f64> {
    let (sa, ca) = az.sin_cos();
    let (se, ce) = el.sin_cos();
    Vector3::new(ce * ca, ce * sa, se)
}

/// Azimuth and elevation, radians, of a unit direction.
pub fn direction_angles(d: &Vector3<f64>) -> (f64, f64) {
    (d.y.atan2(d.x), d.z.clamp(-1.0, 1.0).asin())
}

/// Spinning multi-ring pattern in column-major order. Each column is fired
/// ring by ring, one sample every `1 / point_rate` seconds.
pub fn mechanical_pattern(model: &LidarModel) -> Result<Vec<BeamSample>, SensorError> {
    let budget = model.budget();
    let c = model.channels;
    if c == 0 || budget < c {
        return Err(SensorError::BudgetTooSmall { budget, channels: c });
    }
    let columns = budget / c;
    let step_el = if c > 1 { model.fov_v / (c - 1) as f64 } else { 0.0 };
    let rings: Vec<f64> = (0..c)
        .map(|r| (model.elevation_min + step_el * r as f64).to_radians())
        .collect();
    let mut out = Vec::with_capacity(columns * c);
    for col in 0..columns {
        let az = (-model.fov_h / 2.0 + model.fov_h * col as f64 / columns as f64).to_radians();
        for (r, &el) in rings.iter().enumerate() {
            let k = col * c + r;
            out.push(BeamSample {
                dt: k as f64 / model.point_rate,
                direction: spherical_direction(az, el),
            });
        }
    }
    Ok(out)
}

/// Rosette pattern of a two-prism scanner. Sample times are global, so
/// consecutive frames continue the prism rotation rather than restarting it.
pub fn risley_pattern(model: &LidarModel, frame_index: u64) -> Result<Vec<BeamSample>, SensorError> {
    let budget = model.budget();
    let RisleyParams { f1, f2, phase0 } = model.risley;
    let half_h = (model.fov_h / 2.0).to_radians();
    let half_v = (model.fov_v / 2.0).to_radians();
    let t0 = frame_index as f64 / model.frame_rate;
    Ok((0..budget)
        .map(|k| {
            let dt = k as f64 / model.point_rate;
            let tau = t0 + dt;
            let a = 2.0 * PI * f1 * tau;
            let b = 2.0 * PI * f2 * tau + phase0;
            let ux = 0.5 * a.cos() + 0.5 * b.cos();
            let uy = 0.5 * a.sin() + 0.5 * b.sin();
            BeamSample {
                dt,
                direction: spherical_direction(half_h * ux, half_v * uy),
            }
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LidarPoint {
    /// Sensor frame at emission time, m.
    pub xyz: Vector3<f64>,
    /// Cosine of the incidence angle, in `[0, 1]`.
    pub intensity: f64,
    /// Emission offset from the frame start, s.
    pub dt: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PointCloudFrame {
    pub index: u64,
    pub t0: f64,
    pub points: Vec<LidarPoint>,
}

/// Inputs for one frame. `body_pose` maps absolute time to the robot body
/// pose in the world; the model mount is applied on top.
pub struct FrameRequest<'a> {
    pub scene: &'a Scene,
    pub model: &'a LidarModel,
    pub frame_index: u64,
    pub t0: f64,
    pub seed: u64,
    pub mover_sampling: MoverSampling,
}

/// Synthesize one frame. Each beam is cast from the sensor pose at its own
/// emission time against the scene at that time. Range noise is drawn in
/// beam order before the parallel raycast, so worker count never changes
/// the output.
pub fn simulate_lidar_frame<F>(req: &FrameRequest<'_>, body_pose: F) -> Result<PointCloudFrame, SensorError>
where
    F: Fn(f64) -> Pose + Sync,
{
    let model = req.model;
    model.validate()?;
    let beams = model.pattern(req.frame_index)?;
    let noise: Vec<f64> = if model.range_noise_sigma > 0.0 {
        let dist = Normal::new(0.0, model.range_noise_sigma)
            .map_err(|e| SensorError::InvalidModel(e.to_string()))?;
        let mut rng = stream_rng(req.seed, LIDAR_STREAM, req.frame_index);
        (0..beams.len()).map(|_| dist.sample(&mut rng)).collect()
    } else {
        vec![0.0; beams.len()]
    };

    let scene = req.scene;
    let frame_snapshot = scene.at(req.t0);
    let per_point = req.mover_sampling == MoverSampling::PerPoint && scene.mover_count() > 0;

    let points: Vec<Option<LidarPoint>> = beams
        .par_iter()
        .zip(noise.par_iter())
        .map(|(beam, &n)| {
            let t = req.t0 + beam.dt;
            let sensor = body_pose(t).compose(&model.mount);
            let origin = sensor.position;
            let dir = sensor.transform_vector(&beam.direction).normalize();
            let hit = if per_point {
                scene.at(t).raycast(&origin, &dir, model.max_range)
            } else {
                frame_snapshot.raycast(&origin, &dir, model.max_range)
            }?;
            let range = hit.range + n;
            if !(range > 0.0 && range <= model.max_range) {
                return None;
            }
            Some(LidarPoint {
                xyz: beam.direction * range,
                intensity: (-hit.normal.dot(&dir)).clamp(0.0, 1.0),
                dt: beam.dt,
            })
        })
        .collect();

    Ok(PointCloudFrame {
        index: req.frame_index,
        t0: req.t0,
        points: points.into_iter().flatten().collect(),
    })
}
