use nalgebra::{Matrix3, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{EvalError, KdTree};

/// Estimated points with unit normals, one LIDAR frame.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalFrame {
    pub t: f64,
    pub points: Vec<Vector3<f64>>,
    pub normals: Vec<Vector3<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NormalOptions {
    /// Neighbours used for each reference fit.
    pub k: usize,
    /// Neighbours farther than this are ignored, m.
    pub radius: f64,
    /// Fitted normals are flipped to face this point.
    pub viewpoint: [f64; 3],
}

impl Default for NormalOptions {
    fn default() -> Self {
        Self {
            k: 5,
            radius: 1.0,
            viewpoint: [0.0; 3],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameNormalError {
    pub t: f64,
    /// Sum of `1 - |n_est . n_gt|` over evaluated points.
    pub total: f64,
    pub evaluated: usize,
    /// Queries with fewer than `k` reference points inside the radius.
    pub skipped: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalResult {
    pub frames: Vec<FrameNormalError>,
    pub skipped: usize,
}

/// Unit normal of the best-fit plane through `points`: the eigenvector of
/// the smallest eigenvalue of the centred scatter matrix. `None` for fewer
/// than three points or a degenerate (collinear) neighbourhood.
pub fn fit_normal(points: &[Vector3<f64>]) -> Option<Vector3<f64>> {
    if points.len() < 3 {
        return None;
    }
    let c = points.iter().sum::<Vector3<f64>>() / points.len() as f64;
    let mut scatter = Matrix3::zeros();
    for p in points {
        let d = p - c;
        scatter += d * d.transpose();
    }
    let eig = scatter.symmetric_eigen();
    let mut idx = [0usize, 1, 2];
    idx.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]).then(a.cmp(&b)));
    let (l1, l2) = (eig.eigenvalues[idx[1]], eig.eigenvalues[idx[2]]);
    if !(l2 > 0.0) || l1 <= 1e-12 * l2 {
        return None;
    }
    let n: Vector3<f64> = eig.eigenvectors.column(idx[0]).into_owned();
    Some(n.normalize())
}

/// Fitted reference normal at `q`, oriented toward `viewpoint`.
fn reference_normal(tree: &KdTree, q: &Vector3<f64>, opts: &NormalOptions) -> Option<Vector3<f64>> {
    let nb = tree.knn(q, opts.k, opts.radius);
    if nb.len() < opts.k {
        return None;
    }
    let pts: Vec<Vector3<f64>> = nb.iter().map(|&(i, _)| *tree.point(i)).collect();
    let n = fit_normal(&pts)?;
    let view = Vector3::from(opts.viewpoint) - q;
    Some(if n.dot(&view) < 0.0 { -n } else { n })
}

/// Per-frame total of `1 - |n_est . n_gt|`, with reference normals fitted
/// to the `k` nearest points of the error-free reference cloud.
pub fn plane_normal_error(frames: &[NormalFrame], reference: &KdTree, opts: &NormalOptions) -> Result<NormalResult, EvalError> {
    if opts.k < 3 {
        return Err(EvalError::Invalid("k must be at least 3".into()));
    }
    if let Some(f) = frames.iter().find(|f| f.points.is_empty()) {
        return Err(EvalError::EmptyFrame(f.t));
    }
    let out: Vec<FrameNormalError> = frames
        .par_iter()
        .map(|f| {
            let mut total = 0.0;
            let (mut evaluated, mut skipped) = (0, 0);
            for (p, n) in f.points.iter().zip(&f.normals) {
                match reference_normal(reference, p, opts) {
                    Some(g) => {
                        total += 1.0 - n.normalize().dot(&g).abs().min(1.0);
                        evaluated += 1;
                    }
                    None => skipped += 1,
                }
            }
            FrameNormalError { t: f.t, total, evaluated, skipped }
        })
        .collect();
    if out.iter().all(|f| f.evaluated == 0) {
        return Err(EvalError::SparseReference(opts.k));
    }
    let skipped = out.iter().map(|f| f.skipped).sum();
    if skipped > 0 {
        log::info!("{skipped} normal queries skipped for lack of reference neighbours");
    }
    Ok(NormalResult { frames: out, skipped })
}

/// Reference normals for every point of a cloud, for building
/// self-consistent estimates. Points without a fit get `None`.
pub fn fit_cloud_normals(tree: &KdTree, points: &[Vector3<f64>], opts: &NormalOptions) -> Vec<Option<Vector3<f64>>> {
    points.par_iter().map(|p| reference_normal(tree, p, opts)).collect()
}

/// CSV `t,px,py,pz,nx,ny,nz`; rows sharing a timestamp form one frame.
/// An optional header row starting with `t` is skipped.
pub fn parse_normals_csv(text: &str, file: &str) -> Result<Vec<NormalFrame>, EvalError> {
    let mut frames: Vec<NormalFrame> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') || (i == 0 && line.starts_with('t')) {
            continue;
        }
        let nums: Vec<f64> = line
            .split(',')
            .map(|f| f.trim().parse::<f64>().ok().filter(|x| x.is_finite()))
            .collect::<Option<Vec<f64>>>()
            .filter(|v| v.len() == 7)
            .ok_or_else(|| EvalError::Invalid(format!("{file}: row {}: expected 7 numeric fields", i + 1)))?;
        let p = Vector3::new(nums[1], nums[2], nums[3]);
        let n = Vector3::new(nums[4], nums[5], nums[6]);
        if n.norm() < 1e-9 {
            return Err(EvalError::Invalid(format!("{file}: row {}: zero normal", i + 1)));
        }
        match frames.last_mut() {
            Some(f) if f.t == nums[0] => {
                f.points.push(p);
                f.normals.push(n);
            }
            Some(f) if nums[0] < f.t => {
                return Err(EvalError::Invalid(format!("{file}: row {}: timestamps go backwards", i + 1)));
            }
            _ => frames.push(NormalFrame { t: nums[0], points: vec![p], normals: vec![n] }),
        }
    }
    Ok(frames)
}
