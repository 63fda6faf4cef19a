//! WebSocket front end for interactive simulation sessions.
//!
//! One client may control the robot (teleop keys or twists, waypoint
//! paths, run control) while any number of observers receive the same
//! telemetry: `state` at a fixed wall-clock rate, voxel-downsampled clouds
//! at the LIDAR frame rate and the tracked path whenever it changes.

mod downsample;
mod server;
pub mod wire;

pub use downsample::{downsample_cloud, fit_to_cap};
pub use server::{scene_summary, serve, Service, ServiceConfig};

#[derive(Debug, thiserror::Error)]
pub enum ServiceError {
    #[error("cannot bind {addr}: {source}")]
    Bind {
        addr: String,
        source: std::io::Error,
    },
    #[error("voxel size must be positive, got {0}")]
    InvalidVoxel(f64),
    #[error("service config: {0}")]
    Config(String),
}
