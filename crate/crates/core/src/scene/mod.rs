//! Scene description, scripted movers and ray intersection.
//!
//! Static bounded geometry lives in a BVH; unbounded planes and scripted
//! movers are tested exhaustively on every ray. Ties at equal range resolve
//! to the lowest object index, then the lowest triangle index, so the
//! accelerated and exhaustive paths always agree.

mod bundled;
pub mod bvh;
mod format;
pub mod obj;
pub mod primitive;

use nalgebra::Vector3;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use crate::pose::Pose;
use bvh::{Aabb, Bvh};

pub use bundled::{bundled_scene_names, bundled_scene_source};
pub use format::{
    MotionDocument, ObjectDocument, ObjectKind, ObjectSummary, PoseDocument, SceneDocument,
    SceneFeature, SceneReport, Violation, WaypointDocument,
};
pub use primitive::{GeometryPrimitive, Shape, TriangleMesh};

#[derive(Debug, thiserror::Error)]
pub enum SceneError {
    #[error("cannot read scene {}: {source}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{origin}:{line}:{column}: {message}")]
    Parse {
        origin: String,
        line: usize,
        column: usize,
        message: String,
    },
    #[error("object `{object}`: {message}")]
    Invalid { object: String, message: String },
    #[error("unknown bundled scene `{0}`")]
    UnknownBundled(String),
}

/// Keyframed pose track for a scripted mover.
#[derive(Debug, Clone, PartialEq)]
pub struct MotionScript {
    pub waypoints: Vec<(f64, Pose)>,
    pub looping: bool,
}

impl MotionScript {
    pub fn period(&self) -> f64 {
        self.waypoints.last().map_or(0.0, |w| w.0)
    }

    /// Piecewise-linear position and slerped orientation; wraps by the last
    /// waypoint time when looping, holds the final pose otherwise.
    pub fn pose_at(&self, t: f64) -> Pose {
        let n = self.waypoints.len();
        if n == 1 {
            return self.waypoints[0].1;
        }
        let period = self.period();
        let t = if self.looping && period > 0.0 {
            t.rem_euclid(period)
        } else {
            t
        };
        if t <= 0.0 {
            return self.waypoints[0].1;
        }
        if t >= period {
            return self.waypoints[n - 1].1;
        }
        // first waypoint strictly after t
        let hi = self.waypoints.partition_point(|w| w.0 <= t);
        let (t0, p0) = self.waypoints[hi - 1];
        if t == t0 {
            return p0;
        }
        let (t1, p1) = self.waypoints[hi];
        p0.interpolate(&p1, (t - t0) / (t1 - t0))
    }
}

#[derive(Debug, Clone)]
pub struct SceneObject {
    pub id: Arc<str>,
    pub geometry: GeometryPrimitive,
    pub motion: Option<MotionScript>,
}

impl SceneObject {
    pub fn is_mover(&self) -> bool {
        self.motion.is_some()
    }

    /// World pose of the geometry frame at time `t`.
    pub fn pose_at(&self, t: f64) -> Pose {
        match &self.motion {
            Some(m) => m.pose_at(t).compose(&self.geometry.local_pose),
            None => self.geometry.local_pose,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RayHit {
    pub range: f64,
    pub point: Vector3<f64>,
    /// Unit normal turned to face the incoming ray.
    pub normal: Vector3<f64>,
    pub object_index: usize,
    pub object_id: Arc<str>,
}

#[derive(Debug, Clone, Copy)]
enum StaticItem {
    Solid { object: u32 },
    Triangle { object: u32, tri: u32 },
}

#[derive(Debug, Clone, Copy)]
struct Candidate {
    t: f64,
    normal: Vector3<f64>,
    object: usize,
    sub: u32,
}

fn improves(best: &Option<Candidate>, t: f64, object: usize, sub: u32) -> bool {
    match best {
        None => true,
        Some(b) => t < b.t || (t == b.t && (object, sub) < (b.object, b.sub)),
    }
}

#[derive(Debug, Clone)]
pub struct Scene {
    pub name: String,
    pub environment: Option<String>,
    pub feature: Option<SceneFeature>,
    pub objects: Vec<SceneObject>,
    /// World-space triangles of static meshes, indexed by object.
    static_triangles: Vec<Vec<[Vector3<f64>; 3]>>,
    items: Vec<StaticItem>,
    bvh: Bvh,
    planes: Vec<usize>,
    movers: Vec<usize>,
}

impl Scene {
    pub fn from_objects(
        name: impl Into<String>,
        objects: Vec<SceneObject>,
    ) -> Result<Scene, SceneError> {
        let mut seen = std::collections::HashSet::new();
        for o in &objects {
            if !seen.insert(o.id.clone()) {
                return Err(SceneError::Invalid {
                    object: o.id.to_string(),
                    message: format!("duplicate object id `{}`", o.id),
                });
            }
        }
        let mut static_triangles = vec![Vec::new(); objects.len()];
        let mut items = Vec::new();
        let mut bounds = Vec::new();
        let mut planes = Vec::new();
        let mut movers = Vec::new();

        for (i, o) in objects.iter().enumerate() {
            if o.is_mover() {
                movers.push(i);
                continue;
            }
            let pose = o.geometry.local_pose;
            match &o.geometry.shape {
                Shape::Plane => planes.push(i),
                Shape::Mesh(mesh) => {
                    let tris: Vec<[Vector3<f64>; 3]> = (0..mesh.triangles.len())
                        .map(|k| mesh.triangle(k).map(|v| pose.transform_point(&v)))
                        .collect();
                    for (k, tri) in tris.iter().enumerate() {
                        items.push(StaticItem::Triangle {
                            object: i as u32,
                            tri: k as u32,
                        });
                        bounds.push(Aabb::from_points(tri.iter()));
                    }
                    static_triangles[i] = tris;
                }
                shape => {
                    let (lo, hi) = shape.local_bounds().expect("bounded shape");
                    let corners: Vec<Vector3<f64>> = (0..8)
                        .map(|c| {
                            let v = Vector3::new(
                                if c & 1 == 0 { lo.x } else { hi.x },
                                if c & 2 == 0 { lo.y } else { hi.y },
                                if c & 4 == 0 { lo.z } else { hi.z },
                            );
                            pose.transform_point(&v)
                        })
                        .collect();
                    items.push(StaticItem::Solid { object: i as u32 });
                    bounds.push(Aabb::from_points(corners.iter()));
                }
            }
        }

        Ok(Scene {
            name: name.into(),
            environment: None,
            feature: None,
            objects,
            static_triangles,
            bvh: Bvh::build(&bounds),
            items,
            planes,
            movers,
        })
    }

    /// Parse and validate a scene document. Mesh paths resolve against `base_dir`.
    pub fn from_json_str(
        text: &str,
        origin: &str,
        base_dir: Option<&Path>,
    ) -> Result<Scene, SceneError> {
        let doc = SceneDocument::parse(text, origin)?;
        Self::from_document(&doc, base_dir)
    }

    pub fn from_document(doc: &SceneDocument, base_dir: Option<&Path>) -> Result<Scene, SceneError> {
        let (report, objects) = format::check_document(doc, base_dir);
        if let Some(v) = report.violations.into_iter().next() {
            return Err(SceneError::Invalid {
                object: v.object,
                message: v.message,
            });
        }
        let mut scene = Scene::from_objects(doc.name.clone(), objects)?;
        scene.environment = doc.environment.clone();
        scene.feature = doc.feature;
        Ok(scene)
    }

    pub fn mover_count(&self) -> usize {
        self.movers.len()
    }

    pub fn movers(&self) -> impl Iterator<Item = &SceneObject> {
        self.movers.iter().map(|&i| &self.objects[i])
    }

    pub fn object(&self, id: &str) -> Option<&SceneObject> {
        self.objects.iter().find(|o| &*o.id == id)
    }

    /// Copy of this scene without its scripted movers.
    pub fn without_movers(&self) -> Scene {
        let objects = self
            .objects
            .iter()
            .filter(|o| !o.is_mover())
            .cloned()
            .collect();
        let mut s = Scene::from_objects(self.name.clone(), objects).expect("ids stay unique");
        s.environment = self.environment.clone();
        s.feature = self.feature;
        s
    }

    /// Freeze scripted movers at time `t`.
    pub fn at(&self, t: f64) -> SceneSnapshot<'_> {
        SceneSnapshot {
            scene: self,
            t,
            mover_poses: self.movers.iter().map(|&i| self.objects[i].pose_at(t)).collect(),
        }
    }

    fn intersect_solid(
        &self,
        object: usize,
        pose: &Pose,
        origin: &Vector3<f64>,
        dir: &Vector3<f64>,
        t_max: f64,
    ) -> Option<(f64, Vector3<f64>, u32)> {
        let o = pose.inverse_transform_point(origin);
        let d = pose.inverse_transform_vector(dir);
        self.objects[object]
            .geometry
            .shape
            .intersect_local(&o, &d, t_max)
            .map(|(t, n, sub)| (t, pose.transform_vector(&n), sub))
    }

    fn intersect_static_triangle(
        &self,
        object: usize,
        tri: usize,
        origin: &Vector3<f64>,
        dir: &Vector3<f64>,
        t_max: f64,
    ) -> Option<(f64, Vector3<f64>)> {
        primitive::intersect_triangle(origin, dir, &self.static_triangles[object][tri], t_max)
    }
}

/// A scene with every mover frozen at one instant. Immutable and shareable
/// across threads.
#[derive(Debug, Clone)]
pub struct SceneSnapshot<'a> {
    scene: &'a Scene,
    t: f64,
    mover_poses: Vec<Pose>,
}

impl<'a> SceneSnapshot<'a> {
    pub fn time(&self) -> f64 {
        self.t
    }

    pub fn scene(&self) -> &'a Scene {
        self.scene
    }

    /// World pose of object `index` in this snapshot.
    pub fn object_pose(&self, index: usize) -> Pose {
        match self.scene.movers.iter().position(|&m| m == index) {
            Some(k) => self.mover_poses[k],
            None => self.scene.objects[index].geometry.local_pose,
        }
    }

    fn finish(&self, origin: &Vector3<f64>, dir: &Vector3<f64>, best: Option<Candidate>) -> Option<RayHit> {
        best.map(|c| RayHit {
            range: c.t,
            point: origin + dir * c.t,
            normal: c.normal.normalize(),
            object_index: c.object,
            object_id: self.scene.objects[c.object].id.clone(),
        })
    }

    fn movers_and_planes(
        &self,
        origin: &Vector3<f64>,
        dir: &Vector3<f64>,
        best: &mut Option<Candidate>,
        max_range: f64,
    ) {
        let scene = self.scene;
        for &i in &scene.planes {
            let limit = best.map_or(max_range, |b| b.t);
            if let Some((t, n, sub)) =
                scene.intersect_solid(i, &scene.objects[i].geometry.local_pose, origin, dir, limit)
            {
                if improves(best, t, i, sub) {
                    *best = Some(Candidate { t, normal: n, object: i, sub });
                }
            }
        }
        for (k, &i) in scene.movers.iter().enumerate() {
            let limit = best.map_or(max_range, |b| b.t);
            if let Some((t, n, sub)) =
                scene.intersect_solid(i, &self.mover_poses[k], origin, dir, limit)
            {
                if improves(best, t, i, sub) {
                    *best = Some(Candidate { t, normal: n, object: i, sub });
                }
            }
        }
    }

    /// Nearest hit within `max_range` using the acceleration structure.
    /// `dir` must be unit length.
    pub fn raycast(&self, origin: &Vector3<f64>, dir: &Vector3<f64>, max_range: f64) -> Option<RayHit> {
        debug_assert!((dir.norm() - 1.0).abs() <= 1e-9, "ray direction must be unit");
        debug_assert!(max_range > 0.0);
        let scene = self.scene;
        let mut best: Option<Candidate> = None;
        self.movers_and_planes(origin, dir, &mut best, max_range);

        let start = best.map_or(max_range, |b| b.t);
        scene.bvh.traverse(origin, dir, start, |item, limit| {
            match scene.items[item as usize] {
                StaticItem::Solid { object } => {
                    let i = object as usize;
                    let pose = scene.objects[i].geometry.local_pose;
                    if let Some((t, n, sub)) = scene.intersect_solid(i, &pose, origin, dir, limit) {
                        if improves(&best, t, i, sub) {
                            best = Some(Candidate { t, normal: n, object: i, sub });
                        }
                    }
                }
                StaticItem::Triangle { object, tri } => {
                    let i = object as usize;
                    if let Some((t, n)) =
                        scene.intersect_static_triangle(i, tri as usize, origin, dir, limit)
                    {
                        if improves(&best, t, i, tri) {
                            best = Some(Candidate { t, normal: n, object: i, sub: tri });
                        }
                    }
                }
            }
            best.map_or(limit, |b| b.t)
        });
        self.finish(origin, dir, best)
    }

    /// Reference path: test every object in index order.
    pub fn raycast_exhaustive(
        &self,
        origin: &Vector3<f64>,
        dir: &Vector3<f64>,
        max_range: f64,
    ) -> Option<RayHit> {
        let scene = self.scene;
        let mut best: Option<Candidate> = None;
        for i in 0..scene.objects.len() {
            let limit = best.map_or(max_range, |b| b.t);
            let obj = &scene.objects[i];
            if !obj.is_mover() {
                if let Shape::Mesh(_) = obj.geometry.shape {
                    for k in 0..scene.static_triangles[i].len() {
                        let limit = best.map_or(max_range, |b| b.t);
                        if let Some((t, n)) =
                            scene.intersect_static_triangle(i, k, origin, dir, limit)
                        {
                            if improves(&best, t, i, k as u32) {
                                best = Some(Candidate { t, normal: n, object: i, sub: k as u32 });
                            }
                        }
                    }
                    continue;
                }
            }
            let pose = self.object_pose(i);
            if let Some((t, n, sub)) = scene.intersect_solid(i, &pose, origin, dir, limit) {
                if improves(&best, t, i, sub) {
                    best = Some(Candidate { t, normal: n, object: i, sub });
                }
            }
        }
        self.finish(origin, dir, best)
    }
}

/// Load a `.scene.json` file. Mesh files resolve relative to the scene file.
pub fn load_scene(path: impl AsRef<Path>) -> Result<Scene, SceneError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| SceneError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Scene::from_json_str(&text, &path.display().to_string(), path.parent())
}

/// Resolve `builtin:<name>` to a bundled scene, anything else to a file.
pub fn load_scene_spec(spec: &str) -> Result<Scene, SceneError> {
    match spec.strip_prefix("builtin:") {
        Some(name) => {
            let text =
                bundled_scene_source(name).ok_or_else(|| SceneError::UnknownBundled(name.into()))?;
            Scene::from_json_str(text, spec, None)
        }
        None => load_scene(spec),
    }
}

/// Validation report for a scene file (or `builtin:<name>`), listing every
/// violation rather than stopping at the first.
pub fn validate_scene_spec(spec: &str) -> Result<SceneReport, SceneError> {
    let (text, base): (String, Option<PathBuf>) = match spec.strip_prefix("builtin:") {
        Some(name) => (
            bundled_scene_source(name)
                .ok_or_else(|| SceneError::UnknownBundled(name.into()))?
                .to_string(),
            None,
        ),
        None => {
            let path = Path::new(spec);
            let text = std::fs::read_to_string(path).map_err(|source| SceneError::Io {
                path: path.to_path_buf(),
                source,
            })?;
            (text, path.parent().map(Path::to_path_buf))
        }
    };
    let doc = SceneDocument::parse(&text, spec)?;
    Ok(format::check_document(&doc, base.as_deref()).0)
}
