//! Motion control: keyboard teleoperation and autonomous path tracking.

pub mod pursuit;
pub mod spline;
pub mod teleop;

pub use pursuit::{
    cross_track_error, pure_pursuit_step, track_path, TrackError, TrackRun, TrackerConfig,
    TrackerState,
};
pub use spline::{build_spline, PathFile, SplineError, SplinePath, PATH_SAMPLES};
pub use teleop::{apply_action, teleop_update, TeleopAction, TeleopConfig};
