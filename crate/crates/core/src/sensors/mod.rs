//! LIDAR and IMU synthesis from ground-truth motion.

pub mod imu;
pub mod lidar;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use imu::{imu_grid_index, simulate_imu, ImuModel, ImuSample};
pub use lidar::{
    direction_angles, mechanical_pattern, risley_pattern, simulate_lidar_frame, spherical_direction,
    BeamSample, FrameRequest, LidarModel, LidarPoint, MoverSampling, PatternKind, PointCloudFrame,
    RisleyParams, BUILTIN_LIDARS,
};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SensorError {
    #[error("point budget {budget} is smaller than the {channels} channels")]
    BudgetTooSmall { budget: usize, channels: usize },
    #[error("invalid sensor model: {0}")]
    InvalidModel(String),
    #[error("t = {0} s is not on the IMU clock")]
    OffGrid(f64),
}

pub(crate) const LIDAR_STREAM: u64 = 0x4c49_4441_5200_0000;
pub(crate) const IMU_STREAM: u64 = 0x494d_5500_0000_0000;

/// Independent generator for one (seed, stream family, index) triple.
pub fn stream_rng(seed: u64, family: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ family);
    rng.set_stream(index);
    rng
}

/// Generator for the noise of IMU sample `index`.
pub fn imu_rng(seed: u64, index: u64) -> ChaCha8Rng {
    stream_rng(seed, IMU_STREAM, index)
}
