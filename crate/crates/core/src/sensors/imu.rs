use nalgebra::Vector3;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::SensorError;
use crate::kinematics::RobotState;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ImuModel {
    /// Hz
    pub rate: f64,
    /// rad/s
    pub gyro_noise_sigma: f64,
    /// m/s^2
    pub accel_noise_sigma: f64,
    pub gyro_bias: [f64; 3],
    pub accel_bias: [f64; 3],
    /// Magnitude along world -z, m/s^2.
    pub gravity: f64,
}

impl Default for ImuModel {
    fn default() -> Self {
        Self {
            rate: 200.0,
            gyro_noise_sigma: 0.001,
            accel_noise_sigma: 0.01,
            gyro_bias: [0.0; 3],
            accel_bias: [0.0; 3],
            gravity: 9.81,
        }
    }
}

impl ImuModel {
    /// Noise and bias free copy.
    pub fn ideal(&self) -> ImuModel {
        ImuModel {
            gyro_noise_sigma: 0.0,
            accel_noise_sigma: 0.0,
            gyro_bias: [0.0; 3],
            accel_bias: [0.0; 3],
            ..self.clone()
        }
    }

    pub fn period(&self) -> f64 {
        1.0 / self.rate
    }

    pub fn validate(&self) -> Result<(), SensorError> {
        if !(self.rate > 0.0 && self.rate.is_finite()) {
            return Err(SensorError::InvalidModel("imu rate must be strictly positive".into()));
        }
        if !(self.gyro_noise_sigma >= 0.0 && self.accel_noise_sigma >= 0.0) {
            return Err(SensorError::InvalidModel("imu noise sigmas must be non-negative".into()));
        }
        let finite = self.gravity.is_finite()
            && self.gyro_bias.iter().chain(&self.accel_bias).all(|b| b.is_finite());
        if !finite {
            return Err(SensorError::InvalidModel("imu bias and gravity must be finite".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImuSample {
    pub t: f64,
    /// Body frame, rad/s.
    pub angular_velocity: Vector3<f64>,
    /// Body frame, m/s^2.
    pub specific_force: Vector3<f64>,
}

/// Relative slack, in periods, for a time to count as on the IMU grid.
const GRID_SLACK: f64 = 1e-6;

/// Index of `t` on the IMU clock, or an error if `t` is between ticks.
pub fn imu_grid_index(model: &ImuModel, t: f64) -> Result<u64, SensorError> {
    let k = t * model.rate;
    let r = k.round();
    if r < 0.0 || (k - r).abs() > GRID_SLACK {
        return Err(SensorError::OffGrid(t));
    }
    Ok(r as u64)
}

/// IMU reading at `cur.t`. `prev` is the state one simulation tick earlier;
/// its commanded speed gives the backward-difference tangential
/// acceleration. Pass `rng = None` for a noise-free sample (bias still
/// applies).
pub fn simulate_imu<R: Rng + ?Sized>(
    prev: &RobotState,
    cur: &RobotState,
    model: &ImuModel,
    rng: Option<&mut R>,
) -> Result<ImuSample, SensorError> {
    imu_grid_index(model, cur.t)?;
    let dt = cur.t - prev.t;
    let v = cur.twist.v;
    let w = cur.twist.w;
    let dv = if dt > 0.0 { (v - prev.twist.v) / dt } else { 0.0 };
    let (s, c) = cur.theta.sin_cos();
    let heading = Vector3::new(c, s, 0.0);
    let left = Vector3::new(-s, c, 0.0);
    let a_world = heading * dv + left * (v * w);
    let g_world = Vector3::new(0.0, 0.0, -model.gravity);
    let f_world = a_world - g_world;
    // yaw-only body rotation, transposed
    let mut specific_force = Vector3::new(
        c * f_world.x + s * f_world.y,
        -s * f_world.x + c * f_world.y,
        f_world.z,
    );
    let mut angular_velocity = Vector3::new(0.0, 0.0, w);
    angular_velocity += Vector3::from(model.gyro_bias);
    specific_force += Vector3::from(model.accel_bias);
    if let Some(rng) = rng {
        if model.gyro_noise_sigma > 0.0 || model.accel_noise_sigma > 0.0 {
            let mut draw = || -> f64 { rng.sample(StandardNormal) };
            let g = Vector3::new(draw(), draw(), draw());
            let a = Vector3::new(draw(), draw(), draw());
            angular_velocity += g * model.gyro_noise_sigma;
            specific_force += a * model.accel_noise_sigma;
        }
    }
    Ok(ImuSample {
        t: cur.t,
        angular_velocity,
        specific_force,
    })
}
