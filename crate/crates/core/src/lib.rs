//! Deterministic LIDAR-inertial robot simulation and trajectory evaluation.
//!
//! A differential-drive robot carrying a LIDAR and an IMU moves through a
//! scene under teleoperation, scripted commands or B-spline path tracking.
//! The simulator records exact ground truth alongside the synthesized sensor
//! streams, and the [`eval`] module scores externally estimated trajectories
//! against it.

pub mod control;
pub mod engine;
pub mod eval;
pub mod kinematics;
pub mod pose;
pub mod scene;
pub mod sensors;
pub mod store;
pub mod trajectory;

pub use control::{build_spline, SplinePath, TeleopConfig, TrackerConfig, TrackerState};
pub use engine::{GroundTruthSample, RunConfig, RunSummary, Simulation};
pub use eval::{Alignment, ErrorStats, EvalError};
pub use kinematics::{ChassisParams, PlanarTwist, RobotState, WheelSpeeds};
pub use pose::{wrap_angle, Pose, StampedPose};
pub use scene::{load_scene, load_scene_spec, RayHit, Scene, SceneSnapshot};
pub use sensors::{ImuModel, ImuSample, LidarModel, PointCloudFrame};
pub use store::{read_bundle, write_bundle, Bundle, Manifest, SequenceStreams};
pub use trajectory::Trajectory;
