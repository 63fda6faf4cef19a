//! TUM trajectory text format: `t x y z qx qy qz qw` per line.

use nalgebra::{Quaternion, UnitQuaternion, Vector3};
use std::fmt::Write as _;
use std::path::Path;

use crate::pose::{Pose, StampedPose};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TrajectoryError {
    #[error("{origin}: row {row}: {message}")]
    Malformed { origin: String, row: usize, message: String },
    #[error("{origin}: timestamps must strictly increase (row {row})")]
    NotIncreasing { origin: String, row: usize },
    #[error("cannot read {0}")]
    Io(String),
}

/// Ordered, strictly increasing in time.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Trajectory {
    pub poses: Vec<StampedPose>,
}

impl Trajectory {
    /// Panics on non-increasing timestamps; use [`Trajectory::try_new`] for input data.
    pub fn new(poses: Vec<StampedPose>) -> Self {
        Self::try_new(poses, "trajectory").expect("timestamps strictly increase")
    }

    pub fn try_new(poses: Vec<StampedPose>, origin: &str) -> Result<Self, TrajectoryError> {
        if let Some(i) = poses.windows(2).position(|w| w[1].t <= w[0].t) {
            return Err(TrajectoryError::NotIncreasing { origin: origin.to_string(), row: i + 2 });
        }
        Ok(Self { poses })
    }

    pub fn len(&self) -> usize {
        self.poses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.poses.is_empty()
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        self.poses.iter().map(|p| p.t)
    }

    /// Same trajectory with `g` applied on the left of every pose.
    pub fn transformed(&self, g: &Pose) -> Trajectory {
        Trajectory {
            poses: self
                .poses
                .iter()
                .map(|p| StampedPose::new(p.t, g.compose(&p.pose)))
                .collect(),
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Trajectory, TrajectoryError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| TrajectoryError::Io(format!("{}: {e}", path.display())))?;
        parse_tum(&text, &path.display().to_string())
    }
}

/// One TUM line, fixed 9 decimals.
pub fn format_tum_line(out: &mut String, p: &StampedPose) {
    let q = p.pose.orientation.quaternion();
    let v = &p.pose.position;
    writeln!(
        out,
        "{:.9} {:.9} {:.9} {:.9} {:.9} {:.9} {:.9} {:.9}",
        p.t, v.x, v.y, v.z, q.i, q.j, q.k, q.w
    )
    .expect("writing to a String");
}

pub fn format_tum(traj: &[StampedPose]) -> String {
    let mut out = String::with_capacity(traj.len() * 96);
    for p in traj {
        format_tum_line(&mut out, p);
    }
    out
}

/// Parse TUM text. Blank lines and `#` comments are skipped; rows are
/// numbered from 1 over all lines.
pub fn parse_tum(text: &str, origin: &str) -> Result<Trajectory, TrajectoryError> {
    let mut poses = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let malformed = |message: String| TrajectoryError::Malformed {
            origin: origin.to_string(),
            row: i + 1,
            message,
        };
        let nums: Vec<f64> = line
            .split_whitespace()
            .map(|f| f.parse::<f64>().ok().filter(|x| x.is_finite()))
            .collect::<Option<Vec<f64>>>()
            .ok_or_else(|| malformed("non-numeric field".into()))?;
        if nums.len() != 8 {
            return Err(malformed(format!("expected 8 fields, got {}", nums.len())));
        }
        let q = Quaternion::new(nums[7], nums[4], nums[5], nums[6]);
        if q.norm() < 1e-6 {
            return Err(malformed("zero quaternion".into()));
        }
        if poses.last().is_some_and(|p: &StampedPose| nums[0] <= p.t) {
            return Err(TrajectoryError::NotIncreasing { origin: origin.to_string(), row: i + 1 });
        }
        // keep already-unit quaternions bit-exact so re-writing is stable
        let q = if (q.norm() - 1.0).abs() <= 1e-8 {
            UnitQuaternion::new_unchecked(q)
        } else {
            UnitQuaternion::from_quaternion(q)
        };
        poses.push(StampedPose::new(nums[0], Pose::new(Vector3::new(nums[1], nums[2], nums[3]), q)));
    }
    Ok(Trajectory { poses })
}
