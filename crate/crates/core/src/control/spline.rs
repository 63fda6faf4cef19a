//! Clamped uniform B-spline paths sampled at a fixed count.

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};
use std::path::Path;

/// Samples taken along every generated path.
pub const PATH_SAMPLES: usize = 5000;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SplineError {
    #[error("a path needs at least 2 distinct control points, got {0}")]
    TooFewPoints(usize),
    #[error("control point {0} is not finite")]
    NonFinite(usize),
    #[error("cannot read path file: {0}")]
    Io(String),
    #[error("path file: {0}")]
    Parse(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplinePath {
    /// Control polygon after collapsing repeated consecutive points.
    pub control_points: Vec<Vector2<f64>>,
    pub degree: usize,
    pub samples: Vec<Vector2<f64>>,
    /// Cumulative polyline length at each sample.
    pub arclength: Vec<f64>,
    /// Consecutive duplicate control points dropped while building.
    pub collapsed_points: usize,
}

impl SplinePath {
    pub fn length(&self) -> f64 {
        *self.arclength.last().unwrap_or(&0.0)
    }

    pub fn start(&self) -> Vector2<f64> {
        self.samples[0]
    }

    pub fn end(&self) -> Vector2<f64> {
        self.samples[self.samples.len() - 1]
    }

    /// Distance from `p` to the sampled polyline.
    pub fn distance_to(&self, p: &Vector2<f64>) -> f64 {
        self.samples
            .windows(2)
            .map(|seg| {
                let (a, b) = (seg[0], seg[1]);
                let ab = b - a;
                let len2 = ab.norm_squared();
                let s = if len2 > 0.0 {
                    ((p - a).dot(&ab) / len2).clamp(0.0, 1.0)
                } else {
                    0.0
                };
                (a + ab * s - p).norm()
            })
            .fold(f64::INFINITY, f64::min)
    }
}

fn clamped_knots(n: usize, degree: usize) -> Vec<f64> {
    let interior = n - degree;
    let mut knots = vec![0.0; degree + 1];
    knots.extend((1..interior).map(|i| i as f64 / interior as f64));
    knots.extend(std::iter::repeat_n(1.0, degree + 1));
    knots
}

/// de Boor evaluation at `u` in `[0, 1]`.
fn de_boor(points: &[Vector2<f64>], knots: &[f64], degree: usize, u: f64) -> Vector2<f64> {
    let n = points.len();
    // span k with knots[k] <= u < knots[k+1], clamped to the last non-empty span
    let mut k = degree;
    while k < n - 1 && u >= knots[k + 1] {
        k += 1;
    }
    let mut d: Vec<Vector2<f64>> = (0..=degree).map(|j| points[j + k - degree]).collect();
    for r in 1..=degree {
        for j in (r..=degree).rev() {
            let lo = knots[j + k - degree];
            let hi = knots[j + 1 + k - r];
            let alpha = (u - lo) / (hi - lo);
            d[j] = d[j - 1] * (1.0 - alpha) + d[j] * alpha;
        }
    }
    d[degree]
}

/// Cubic (or lower, for fewer than 4 points) clamped B-spline through the
/// endpoints of the control polygon, sampled at [`PATH_SAMPLES`] uniform
/// parameter values.
pub fn build_spline(control_points: &[Vector2<f64>]) -> Result<SplinePath, SplineError> {
    build_spline_with(control_points, PATH_SAMPLES)
}

pub fn build_spline_with(
    control_points: &[Vector2<f64>],
    sample_count: usize,
) -> Result<SplinePath, SplineError> {
    if let Some(i) = control_points
        .iter()
        .position(|p| !(p.x.is_finite() && p.y.is_finite()))
    {
        return Err(SplineError::NonFinite(i));
    }
    let mut points: Vec<Vector2<f64>> = Vec::with_capacity(control_points.len());
    for p in control_points {
        if points.last() != Some(p) {
            points.push(*p);
        }
    }
    let collapsed = control_points.len() - points.len();
    if collapsed > 0 {
        log::warn!("collapsed {collapsed} repeated consecutive control point(s)");
    }
    if points.len() < 2 {
        return Err(SplineError::TooFewPoints(points.len()));
    }
    let n = points.len();
    let degree = 3.min(n - 1);
    let knots = clamped_knots(n, degree);
    let last = (sample_count - 1) as f64;
    let samples: Vec<Vector2<f64>> = (0..sample_count)
        .map(|i| de_boor(&points, &knots, degree, i as f64 / last))
        .collect();
    let mut arclength = Vec::with_capacity(sample_count);
    let mut acc = 0.0;
    arclength.push(0.0);
    for w in samples.windows(2) {
        acc += (w[1] - w[0]).norm();
        arclength.push(acc);
    }
    Ok(SplinePath {
        control_points: points,
        degree,
        samples,
        arclength,
        collapsed_points: collapsed,
    })
}

/// `.path.json`: an ordered array of `[x, y]` pairs in meters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PathFile(pub Vec<[f64; 2]>);

impl PathFile {
    pub fn points(&self) -> Vec<Vector2<f64>> {
        self.0.iter().map(|p| Vector2::new(p[0], p[1])).collect()
    }

    pub fn parse(text: &str) -> Result<PathFile, SplineError> {
        serde_json::from_str(text).map_err(|e| SplineError::Parse(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<PathFile, SplineError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| SplineError::Io(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }
}
