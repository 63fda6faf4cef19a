//! Ray/primitive intersection in the primitive's local frame.

use nalgebra::Vector3;
use std::sync::Arc;

use crate::pose::Pose;

/// Triangles with an area at or below this are rejected as degenerate.
pub const MIN_TRIANGLE_AREA: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct TriangleMesh {
    pub vertices: Vec<Vector3<f64>>,
    pub triangles: Vec<[u32; 3]>,
}

impl TriangleMesh {
    pub fn triangle(&self, i: usize) -> [Vector3<f64>; 3] {
        let [a, b, c] = self.triangles[i];
        [
            self.vertices[a as usize],
            self.vertices[b as usize],
            self.vertices[c as usize],
        ]
    }

    pub fn triangle_area(&self, i: usize) -> f64 {
        let [a, b, c] = self.triangle(i);
        0.5 * (b - a).cross(&(c - a)).norm()
    }

    /// Indices of triangles whose area is not strictly above [`MIN_TRIANGLE_AREA`].
    pub fn degenerate_triangles(&self) -> Vec<usize> {
        (0..self.triangles.len())
            .filter(|&i| !(self.triangle_area(i) > MIN_TRIANGLE_AREA))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Shape {
    /// The local `z = 0` plane, unbounded.
    Plane,
    Box { half_extents: Vector3<f64> },
    /// Axis along local z, centred on the origin, `height` end to end.
    Cylinder { radius: f64, height: f64 },
    Sphere { radius: f64 },
    Mesh(Arc<TriangleMesh>),
}

impl Shape {
    pub fn kind_name(&self) -> &'static str {
        match self {
            Shape::Plane => "plane",
            Shape::Box { .. } => "box",
            Shape::Cylinder { .. } => "cylinder",
            Shape::Sphere { .. } => "sphere",
            Shape::Mesh(_) => "mesh",
        }
    }

    pub fn triangle_count(&self) -> usize {
        match self {
            Shape::Mesh(m) => m.triangles.len(),
            _ => 0,
        }
    }

    /// Local-frame axis-aligned bounds, `None` for unbounded shapes.
    pub fn local_bounds(&self) -> Option<(Vector3<f64>, Vector3<f64>)> {
        match self {
            Shape::Plane => None,
            Shape::Box { half_extents } => Some((-half_extents, *half_extents)),
            Shape::Cylinder { radius, height } => {
                let h = Vector3::new(*radius, *radius, height / 2.0);
                Some((-h, h))
            }
            Shape::Sphere { radius } => {
                let h = Vector3::repeat(*radius);
                Some((-h, h))
            }
            Shape::Mesh(m) => {
                let mut lo = Vector3::repeat(f64::INFINITY);
                let mut hi = Vector3::repeat(f64::NEG_INFINITY);
                for v in &m.vertices {
                    lo = lo.inf(v);
                    hi = hi.sup(v);
                }
                Some((lo, hi))
            }
        }
    }

    /// Nearest hit with `0 < t <= t_max` for a ray already expressed in the
    /// shape's local frame. Meshes report the triangle index as the third
    /// element; other shapes report 0.
    pub fn intersect_local(
        &self,
        origin: &Vector3<f64>,
        dir: &Vector3<f64>,
        t_max: f64,
    ) -> Option<(f64, Vector3<f64>, u32)> {
        match self {
            Shape::Plane => intersect_plane(origin, dir, t_max).map(|(t, n)| (t, n, 0)),
            Shape::Box { half_extents } => {
                intersect_box(origin, dir, half_extents, t_max).map(|(t, n)| (t, n, 0))
            }
            Shape::Cylinder { radius, height } => {
                intersect_cylinder(origin, dir, *radius, *height, t_max).map(|(t, n)| (t, n, 0))
            }
            Shape::Sphere { radius } => {
                intersect_sphere(origin, dir, *radius, t_max).map(|(t, n)| (t, n, 0))
            }
            Shape::Mesh(mesh) => {
                let mut best: Option<(f64, Vector3<f64>, u32)> = None;
                for i in 0..mesh.triangles.len() {
                    let limit = best.map_or(t_max, |b| b.0);
                    if let Some((t, n)) = intersect_triangle(origin, dir, &mesh.triangle(i), limit)
                    {
                        if best.is_none_or(|b| t < b.0) {
                            best = Some((t, n, i as u32));
                        }
                    }
                }
                best
            }
        }
    }
}

/// A shape placed in its parent frame.
#[derive(Debug, Clone, PartialEq)]
pub struct GeometryPrimitive {
    pub shape: Shape,
    pub local_pose: Pose,
}

fn facing(n: Vector3<f64>, dir: &Vector3<f64>) -> Vector3<f64> {
    if n.dot(dir) > 0.0 {
        -n
    } else {
        n
    }
}

pub fn intersect_plane(
    origin: &Vector3<f64>,
    dir: &Vector3<f64>,
    t_max: f64,
) -> Option<(f64, Vector3<f64>)> {
    if dir.z == 0.0 {
        return None;
    }
    let t = -origin.z / dir.z;
    (t > 0.0 && t <= t_max).then(|| (t, facing(Vector3::z(), dir)))
}

pub fn intersect_sphere(
    origin: &Vector3<f64>,
    dir: &Vector3<f64>,
    radius: f64,
    t_max: f64,
) -> Option<(f64, Vector3<f64>)> {
    // |o + t d|^2 = r^2 with |d| = 1
    let b = origin.dot(dir);
    let c = origin.norm_squared() - radius * radius;
    let disc = b * b - c;
    if disc < 0.0 {
        return None;
    }
    let sq = disc.sqrt();
    // numerically stable root pair
    let q = if b > 0.0 { -b - sq } else { -b + sq };
    let (mut t0, mut t1) = if q != 0.0 { (q, c / q) } else { (0.0, 0.0) };
    if t0 > t1 {
        std::mem::swap(&mut t0, &mut t1);
    }
    let t = if t0 > 0.0 { t0 } else { t1 };
    if !(t > 0.0 && t <= t_max) {
        return None;
    }
    let n = (origin + dir * t) / radius;
    Some((t, facing(n, dir)))
}

pub fn intersect_box(
    origin: &Vector3<f64>,
    dir: &Vector3<f64>,
    half: &Vector3<f64>,
    t_max: f64,
) -> Option<(f64, Vector3<f64>)> {
    let mut t_near = f64::NEG_INFINITY;
    let mut t_far = f64::INFINITY;
    let mut near_axis = 0;
    let mut far_axis = 0;
    for a in 0..3 {
        if dir[a] == 0.0 {
            if origin[a] < -half[a] || origin[a] > half[a] {
                return None;
            }
            continue;
        }
        let mut t0 = (-half[a] - origin[a]) / dir[a];
        let mut t1 = (half[a] - origin[a]) / dir[a];
        if t0 > t1 {
            std::mem::swap(&mut t0, &mut t1);
        }
        if t0 > t_near {
            t_near = t0;
            near_axis = a;
        }
        if t1 < t_far {
            t_far = t1;
            far_axis = a;
        }
    }
    if t_near > t_far {
        return None;
    }
    let (t, axis) = if t_near > 0.0 {
        (t_near, near_axis)
    } else {
        (t_far, far_axis)
    };
    if !(t > 0.0 && t <= t_max) {
        return None;
    }
    let mut n = Vector3::zeros();
    n[axis] = 1.0;
    Some((t, facing(n, dir)))
}

pub fn intersect_cylinder(
    origin: &Vector3<f64>,
    dir: &Vector3<f64>,
    radius: f64,
    height: f64,
    t_max: f64,
) -> Option<(f64, Vector3<f64>)> {
    let half_h = height / 2.0;
    let mut best: Option<(f64, Vector3<f64>)> = None;
    let mut consider = |t: f64, n: Vector3<f64>| {
        if t > 0.0 && t <= t_max && best.is_none_or(|b| t < b.0) {
            best = Some((t, n));
        }
    };

    // lateral surface
    let a = dir.x * dir.x + dir.y * dir.y;
    if a > 0.0 {
        let b = origin.x * dir.x + origin.y * dir.y;
        let c = origin.x * origin.x + origin.y * origin.y - radius * radius;
        let disc = b * b - a * c;
        if disc >= 0.0 {
            let sq = disc.sqrt();
            let q = if b > 0.0 { -b - sq } else { -b + sq };
            let roots = if q != 0.0 { [q / a, c / q] } else { [0.0, 0.0] };
            for t in roots {
                let z = origin.z + t * dir.z;
                if z.abs() <= half_h {
                    let p = origin + dir * t;
                    consider(t, Vector3::new(p.x, p.y, 0.0) / radius);
                }
            }
        }
    }
    // caps
    if dir.z != 0.0 {
        for cap in [-half_h, half_h] {
            let t = (cap - origin.z) / dir.z;
            let p = origin + dir * t;
            if p.x * p.x + p.y * p.y <= radius * radius {
                consider(t, Vector3::new(0.0, 0.0, cap.signum()));
            }
        }
    }
    best.map(|(t, n)| (t, facing(n, dir)))
}

/// Möller–Trumbore, two-sided.
pub fn intersect_triangle(
    origin: &Vector3<f64>,
    dir: &Vector3<f64>,
    tri: &[Vector3<f64>; 3],
    t_max: f64,
) -> Option<(f64, Vector3<f64>)> {
    let e1 = tri[1] - tri[0];
    let e2 = tri[2] - tri[0];
    let p = dir.cross(&e2);
    let det = e1.dot(&p);
    if det.abs() < 1e-15 {
        return None;
    }
    let inv = 1.0 / det;
    let s = origin - tri[0];
    let u = s.dot(&p) * inv;
    if !(0.0..=1.0).contains(&u) {
        return None;
    }
    let q = s.cross(&e1);
    let v = dir.dot(&q) * inv;
    if v < 0.0 || u + v > 1.0 {
        return None;
    }
    let t = e2.dot(&q) * inv;
    if !(t > 0.0 && t <= t_max) {
        return None;
    }
    let n = e1.cross(&e2).normalize();
    Some((t, facing(n, dir)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plane_from_above() {
        let (t, n) =
            intersect_plane(&Vector3::new(0.0, 0.0, 1.0), &-Vector3::z(), 10.0).unwrap();
        assert_eq!(t, 1.0);
        assert_eq!(n, Vector3::z());
        assert!(intersect_plane(&Vector3::new(0.0, 0.0, 1.0), &Vector3::x(), 10.0).is_none());
    }

    #[test]
    fn sphere_front_and_inside() {
        let o = Vector3::new(-5.0, 0.0, 0.0);
        let (t, n) = intersect_sphere(&o, &Vector3::x(), 1.0, 100.0).unwrap();
        assert!((t - 4.0).abs() < 1e-12);
        assert!((n - Vector3::new(-1.0, 0.0, 0.0)).norm() < 1e-12);
        let (t, _) = intersect_sphere(&Vector3::zeros(), &Vector3::x(), 1.0, 100.0).unwrap();
        assert!((t - 1.0).abs() < 1e-12);
        assert!(intersect_sphere(&o, &Vector3::x(), 1.0, 3.9).is_none());
    }

    #[test]
    fn box_faces() {
        let half = Vector3::new(1.0, 2.0, 3.0);
        let (t, n) =
            intersect_box(&Vector3::new(-5.0, 0.5, 0.5), &Vector3::x(), &half, 100.0).unwrap();
        assert_eq!(t, 4.0);
        assert_eq!(n, Vector3::new(-1.0, 0.0, 0.0));
        // from inside: exit face, normal turned toward the ray
        let (t, n) = intersect_box(&Vector3::zeros(), &Vector3::y(), &half, 100.0).unwrap();
        assert_eq!(t, 2.0);
        assert!(n.dot(&Vector3::y()) <= 0.0);
        assert!(intersect_box(&Vector3::new(-5.0, 5.0, 0.0), &Vector3::x(), &half, 100.0).is_none());
    }

    #[test]
    fn cylinder_side_and_cap() {
        let (t, n) = intersect_cylinder(
            &Vector3::new(-3.0, 0.0, 0.0),
            &Vector3::x(),
            0.5,
            2.0,
            100.0,
        )
        .unwrap();
        assert!((t - 2.5).abs() < 1e-12);
        assert!((n - Vector3::new(-1.0, 0.0, 0.0)).norm() < 1e-12);
        let (t, n) = intersect_cylinder(
            &Vector3::new(0.1, 0.0, 5.0),
            &-Vector3::z(),
            0.5,
            2.0,
            100.0,
        )
        .unwrap();
        assert!((t - 4.0).abs() < 1e-12);
        assert_eq!(n, Vector3::z());
        // passes above
        assert!(intersect_cylinder(
            &Vector3::new(-3.0, 0.0, 1.5),
            &Vector3::x(),
            0.5,
            2.0,
            100.0
        )
        .is_none());
    }

    #[test]
    fn triangle_two_sided() {
        let tri = [
            Vector3::new(0.0, -1.0, -1.0),
            Vector3::new(0.0, 1.0, -1.0),
            Vector3::new(0.0, 0.0, 1.0),
        ];
        let (t, n) = intersect_triangle(&Vector3::new(-2.0, 0.0, 0.0), &Vector3::x(), &tri, 10.0)
            .unwrap();
        assert!((t - 2.0).abs() < 1e-12);
        assert!(n.dot(&Vector3::x()) < 0.0);
        let (_, n) = intersect_triangle(&Vector3::new(2.0, 0.0, 0.0), &-Vector3::x(), &tri, 10.0)
            .unwrap();
        assert!(n.dot(&-Vector3::x()) < 0.0);
    }

    #[test]
    fn degenerate_triangle_detected() {
        let mesh = TriangleMesh {
            vertices: vec![
                Vector3::zeros(),
                Vector3::x(),
                Vector3::y(),
                Vector3::new(2.0, 0.0, 0.0),
            ],
            triangles: vec![[0, 1, 2], [0, 1, 3]],
        };
        assert_eq!(mesh.degenerate_triangles(), vec![1]);
    }
}
