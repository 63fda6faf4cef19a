use std::collections::HashMap;

use lidarsim_core::PointCloudFrame;

use crate::ServiceError;

/// Keep one point per occupied cubic voxel of edge `voxel`: the one with
/// the smallest `dt`, earliest in beam order on ties. Survivors keep their
/// original order.
pub fn downsample_cloud(frame: &PointCloudFrame, voxel: f64) -> Result<PointCloudFrame, ServiceError> {
    if !(voxel > 0.0) || !voxel.is_finite() {
        return Err(ServiceError::InvalidVoxel(voxel));
    }
    let mut best: HashMap<[i64; 3], usize> = HashMap::with_capacity(frame.points.len());
    for (i, p) in frame.points.iter().enumerate() {
        let key = [
            (p.xyz.x / voxel).floor() as i64,
            (p.xyz.y / voxel).floor() as i64,
            (p.xyz.z / voxel).floor() as i64,
        ];
        best.entry(key)
            .and_modify(|j| {
                if p.dt < frame.points[*j].dt {
                    *j = i;
                }
            })
            .or_insert(i);
    }
    let mut keep: Vec<usize> = best.into_values().collect();
    keep.sort_unstable();
    Ok(PointCloudFrame {
        index: frame.index,
        t0: frame.t0,
        points: keep.into_iter().map(|i| frame.points[i]).collect(),
    })
}

/// Frames at or under `cap` pass through untouched. Larger ones are
/// downsampled, doubling the voxel until the result fits. Returns the
/// frame and the voxel actually used (0 when untouched).
pub fn fit_to_cap(frame: &PointCloudFrame, voxel: f64, cap: usize) -> Result<(PointCloudFrame, f64), ServiceError> {
    if frame.points.len() <= cap {
        return Ok((frame.clone(), 0.0));
    }
    let mut v = voxel;
    loop {
        let out = downsample_cloud(frame, v)?;
        if out.points.len() <= cap {
            return Ok((out, v));
        }
        v *= 2.0;
    }
}
