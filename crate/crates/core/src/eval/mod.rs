//! Trajectory evaluation: association, alignment, APE, RPE and the
//! plane-normal diagnostic.

pub mod kdtree;
pub mod normals;
pub mod report;

use nalgebra::{Matrix3, Rotation3, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use crate::pose::Pose;
use crate::trajectory::Trajectory;

pub use kdtree::KdTree;
pub use normals::{
    fit_cloud_normals, fit_normal, parse_normals_csv, plane_normal_error, FrameNormalError, NormalFrame, NormalOptions,
    NormalResult,
};
pub use report::{series_csv, summary_table, write_report, MetricKind, MetricResult, ReportFiles, SUMMARY_HEADER};

pub const DEFAULT_MAX_DT: f64 = 0.01;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EvalError {
    #[error("zero matches between estimate and reference")]
    ZeroMatches,
    #[error("empty trajectory")]
    Empty,
    #[error("degenerate point configuration: {0}")]
    Degenerate(String),
    #[error("delta {0} exceeds the matched trajectory span")]
    DeltaTooLarge(String),
    #[error("invalid argument: {0}")]
    Invalid(String),
    #[error("empty frame at t = {0}")]
    EmptyFrame(f64),
    #[error("reference cloud too sparse: every query had fewer than {0} neighbours")]
    SparseReference(usize),
    #[error("nothing to report")]
    NothingToReport,
    #[error("{0}")]
    Io(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorStats {
    pub rmse: f64,
    pub mean: f64,
    pub median: f64,
    pub std: f64,
    pub min: f64,
    pub max: f64,
}

impl ErrorStats {
    /// Population statistics; `std` divides by `n`.
    pub fn from_values(values: &[f64]) -> Option<ErrorStats> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let (mut sum, mut sum_sq) = (0.0, 0.0);
        let (mut min, mut max) = (f64::INFINITY, f64::NEG_INFINITY);
        for &v in values {
            sum += v;
            sum_sq += v * v;
            min = min.min(v);
            max = max.max(v);
        }
        let mean = sum / n;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        let m = sorted.len() / 2;
        let median = if sorted.len() % 2 == 1 {
            sorted[m]
        } else {
            0.5 * (sorted[m - 1] + sorted[m])
        };
        Some(ErrorStats {
            rmse: (sum_sq / n).sqrt(),
            mean,
            median,
            std: var.sqrt(),
            min,
            max,
        })
    }
}

/// Match each estimate pose to the nearest reference pose in time. Pairs
/// are formed greedily by increasing `|dt|`, each pose used at most once;
/// ties go to the lower estimate index, then the lower reference index.
pub fn associate(est: &Trajectory, reference: &Trajectory, max_dt: f64) -> Result<Vec<(usize, usize)>, EvalError> {
    if est.is_empty() || reference.is_empty() {
        return Err(EvalError::Empty);
    }
    if !(max_dt > 0.0) {
        return Err(EvalError::Invalid("max_dt must be positive".into()));
    }
    let rt: Vec<f64> = reference.times().collect();
    let mut cands: Vec<(f64, usize, usize)> = Vec::new();
    for (i, t) in est.times().enumerate() {
        let lo = rt.partition_point(|&r| r < t - max_dt);
        for (j, &r) in rt.iter().enumerate().skip(lo) {
            let d = (r - t).abs();
            if r > t + max_dt {
                break;
            }
            if d <= max_dt {
                cands.push((d, i, j));
            }
        }
    }
    cands.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut used_e = vec![false; est.len()];
    let mut used_r = vec![false; reference.len()];
    let mut pairs = Vec::new();
    for (_, i, j) in cands {
        if !used_e[i] && !used_r[j] {
            used_e[i] = true;
            used_r[j] = true;
            pairs.push((i, j));
        }
    }
    if pairs.is_empty() {
        return Err(EvalError::ZeroMatches);
    }
    pairs.sort();
    Ok(pairs)
}

/// `p -> scale * rotation * p + translation`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlignmentTransform {
    pub rotation: UnitQuaternion<f64>,
    pub translation: Vector3<f64>,
    pub scale: f64,
}

impl AlignmentTransform {
    pub fn identity() -> Self {
        Self {
            rotation: UnitQuaternion::identity(),
            translation: Vector3::zeros(),
            scale: 1.0,
        }
    }

    pub fn apply(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p * self.scale + self.translation
    }

    /// Apply to a full pose: the orientation is rotated, the position mapped.
    pub fn apply_pose(&self, p: &Pose) -> Pose {
        Pose::new(self.apply(&p.position), self.rotation * p.orientation)
    }
}

/// Least-squares `(s, R, t)` minimizing `sum |ref_i - (s R est_i + t)|^2`.
/// Closed form from the SVD of the cross-covariance; when
/// `det(U) det(V) < 0` the singular direction of least weight is flipped so
/// the result is a proper rotation.
pub fn umeyama_align(
    est: &[Vector3<f64>],
    reference: &[Vector3<f64>],
    with_scale: bool,
) -> Result<AlignmentTransform, EvalError> {
    if est.len() != reference.len() {
        return Err(EvalError::Invalid("point sets differ in length".into()));
    }
    if est.len() < 3 {
        return Err(EvalError::Degenerate(format!("{} pairs, need at least 3", est.len())));
    }
    let n = est.len() as f64;
    let mu_x = est.iter().sum::<Vector3<f64>>() / n;
    let mu_y = reference.iter().sum::<Vector3<f64>>() / n;
    let mut cov = Matrix3::zeros();
    let mut spread_x = Matrix3::zeros();
    let mut var_x = 0.0;
    for (x, y) in est.iter().zip(reference) {
        let dx = x - mu_x;
        let dy = y - mu_y;
        cov += dy * dx.transpose();
        spread_x += dx * dx.transpose();
        var_x += dx.norm_squared();
    }
    cov /= n;
    var_x /= n;
    let sv = spread_x.symmetric_eigenvalues();
    let (lo, hi) = (sv.min(), sv.max());
    let mid = sv.sum() - lo - hi;
    if !(hi > 0.0) || mid <= 1e-12 * hi {
        return Err(EvalError::Degenerate("points are coincident or collinear".into()));
    }
    let svd = cov.svd(true, true);
    let u = svd.u.expect("u requested");
    let v_t = svd.v_t.expect("v_t requested");
    let mut s = Matrix3::identity();
    if u.determinant() * v_t.determinant() < 0.0 {
        // nalgebra sorts singular values in decreasing order
        s[(2, 2)] = -1.0;
    }
    let r = u * s * v_t;
    let scale = if with_scale {
        (Matrix3::from_diagonal(&svd.singular_values) * s).trace() / var_x
    } else {
        1.0
    };
    let rotation = UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(r));
    let translation = mu_y - rotation * mu_x * scale;
    Ok(AlignmentTransform { rotation, translation, scale })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Alignment {
    #[default]
    None,
    Se3,
    Sim3,
}

impl std::str::FromStr for Alignment {
    type Err = EvalError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "none" => Ok(Alignment::None),
            "se3" => Ok(Alignment::Se3),
            "sim3" => Ok(Alignment::Sim3),
            _ => Err(EvalError::Invalid(format!("unknown alignment `{s}` (none, se3, sim3)"))),
        }
    }
}

/// Per-pair errors of one metric, stamped with the estimate time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorSeries {
    pub t: Vec<f64>,
    pub error: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApeResult {
    pub stats: ErrorStats,
    pub series: ErrorSeries,
    pub alignment: AlignmentTransform,
    pub pairs: Vec<(usize, usize)>,
}

/// Absolute translational error after optional alignment.
pub fn ape(est: &Trajectory, reference: &Trajectory, align: Alignment, max_dt: f64) -> Result<ApeResult, EvalError> {
    let pairs = associate(est, reference, max_dt)?;
    let pe: Vec<Vector3<f64>> = pairs.iter().map(|&(i, _)| est.poses[i].pose.position).collect();
    let pr: Vec<Vector3<f64>> = pairs.iter().map(|&(_, j)| reference.poses[j].pose.position).collect();
    let alignment = match align {
        Alignment::None => AlignmentTransform::identity(),
        Alignment::Se3 => umeyama_align(&pe, &pr, false)?,
        Alignment::Sim3 => umeyama_align(&pe, &pr, true)?,
    };
    let error: Vec<f64> = pe.iter().zip(&pr).map(|(e, r)| (r - alignment.apply(e)).norm()).collect();
    let t = pairs.iter().map(|&(i, _)| est.poses[i].t).collect();
    Ok(ApeResult {
        stats: ErrorStats::from_values(&error).expect("at least one pair"),
        series: ErrorSeries { t, error },
        alignment,
        pairs,
    })
}

/// Step between the two poses of an RPE window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Delta {
    /// Matched-pair count.
    Frames(usize),
    /// Seconds of estimate time; the partner is the first later pair at
    /// least this far ahead.
    Seconds(f64),
}

impl std::fmt::Display for Delta {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Delta::Frames(n) => write!(f, "{n} frames"),
            Delta::Seconds(s) => write!(f, "{s} s"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RpeResult {
    pub stats: ErrorStats,
    pub series: ErrorSeries,
    /// Matched-pair index windows `(i, j)`.
    pub windows: Vec<(usize, usize)>,
}

/// Relative error `E = (Q_i^-1 Q_j)^-1 (P_i^-1 P_j)` over windows of the
/// matched pairs, translational part.
pub fn rpe(est: &Trajectory, reference: &Trajectory, delta: Delta, max_dt: f64) -> Result<RpeResult, EvalError> {
    let pairs = associate(est, reference, max_dt)?;
    let n = pairs.len();
    let windows: Vec<(usize, usize)> = match delta {
        Delta::Frames(0) => return Err(EvalError::Invalid("delta must be at least 1".into())),
        Delta::Frames(d) => (0..n.saturating_sub(d)).map(|i| (i, i + d)).collect(),
        Delta::Seconds(s) if !(s > 0.0) => return Err(EvalError::Invalid("delta must be positive".into())),
        Delta::Seconds(s) => {
            let tt: Vec<f64> = pairs.iter().map(|&(i, _)| est.poses[i].t).collect();
            let slack = 1e-9 * s.max(1.0);
            (0..n)
                .filter_map(|i| {
                    let j = tt.partition_point(|&t| t < tt[i] + s - slack);
                    (j < n).then_some((i, j))
                })
                .collect()
        }
    };
    if windows.is_empty() {
        return Err(EvalError::DeltaTooLarge(delta.to_string()));
    }
    let mut t = Vec::with_capacity(windows.len());
    let mut error = Vec::with_capacity(windows.len());
    for &(a, b) in &windows {
        let (ei, ri) = pairs[a];
        let (ej, rj) = pairs[b];
        let q = reference.poses[ri].pose.inverse().compose(&reference.poses[rj].pose);
        let p = est.poses[ei].pose.inverse().compose(&est.poses[ej].pose);
        let e = q.inverse().compose(&p);
        t.push(est.poses[ei].t);
        error.push(e.position.norm());
    }
    Ok(RpeResult {
        stats: ErrorStats::from_values(&error).expect("at least one window"),
        series: ErrorSeries { t, error },
        windows,
    })
}
