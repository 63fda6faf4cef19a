//! Fixtures shared by the criterion benches.

use lidarsim_core::{load_scene_spec, Pose, Scene, StampedPose, Trajectory};
use nalgebra::{UnitQuaternion, Vector3};

pub fn room() -> Scene {
    load_scene_spec("builtin:room").expect("bundled scene")
}

/// Deterministic ray fan from the middle of the room, unit directions.
pub fn ray_fan(n: usize) -> Vec<(Vector3<f64>, Vector3<f64>)> {
    let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
    (0..n)
        .map(|i| {
            let z = 1.0 - 2.0 * (i as f64 + 0.5) / n as f64;
            let r = (1.0 - z * z).sqrt();
            let a = golden * i as f64;
            (Vector3::new(0.2, -0.1, 0.8), Vector3::new(r * a.cos(), r * a.sin(), z))
        })
        .collect()
}

/// A wavy trajectory of `n` poses at 200 Hz and a perturbed copy.
pub fn trajectory_pair(n: usize) -> (Trajectory, Trajectory) {
    let make = |wobble: f64| {
        Trajectory::new(
            (0..n)
                .map(|i| {
                    let t = i as f64 * 0.005;
                    let p = Vector3::new(t, (t * 0.7).sin() + wobble * (t * 13.0).sin(), 0.0);
                    StampedPose::new(t, Pose::new(p, UnitQuaternion::from_euler_angles(0.0, 0.0, t * 0.3)))
                })
                .collect(),
        )
    };
    (make(0.02), make(0.0))
}
