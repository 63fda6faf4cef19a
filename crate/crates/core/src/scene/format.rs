//! `.scene.json` document model, validation and conversion to [`Scene`].

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use std::collections::HashSet;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use super::obj::parse_obj;
use super::primitive::{GeometryPrimitive, Shape, TriangleMesh};
use super::{MotionScript, SceneError, SceneObject};
use crate::pose::Pose;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SceneFeature {
    Structural,
    Degenerated,
    Dynamic,
    Unstructured,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ObjectKind {
    Plane,
    Box,
    Cylinder,
    Sphere,
    Mesh,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoseDocument {
    #[serde(default)]
    pub xyz: [f64; 3],
    #[serde(default)]
    pub rpy_deg: [f64; 3],
}

impl PoseDocument {
    pub fn to_pose(&self) -> Pose {
        Pose::from_xyz_rpy(self.xyz, self.rpy_deg.map(f64::to_radians))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WaypointDocument {
    pub t: f64,
    #[serde(default)]
    pub xyz: [f64; 3],
    #[serde(default)]
    pub rpy_deg: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MotionDocument {
    #[serde(default, rename = "loop")]
    pub looping: bool,
    pub waypoints: Vec<WaypointDocument>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectDocument {
    pub id: String,
    pub kind: ObjectKind,
    #[serde(default)]
    pub pose: PoseDocument,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub half_extents: Option<[f64; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub radius: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub height: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mesh_file: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub motion: Option<MotionDocument>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneDocument {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub environment: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub feature: Option<SceneFeature>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    pub objects: Vec<ObjectDocument>,
}

impl SceneDocument {
    pub fn parse(text: &str, origin: &str) -> Result<SceneDocument, SceneError> {
        serde_json::from_str(text).map_err(|e| SceneError::Parse {
            origin: origin.to_string(),
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })
    }
}

/// One invariant violation, attributed to an object.
#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub object: String,
    pub message: String,
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "object `{}`: {}", self.object, self.message)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObjectSummary {
    pub id: String,
    pub kind: ObjectKind,
    pub triangles: usize,
    pub mover: bool,
}

/// Census plus every violation found; produced even for invalid scenes.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneReport {
    pub name: String,
    pub objects: Vec<ObjectSummary>,
    pub violations: Vec<Violation>,
}

impl SceneReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn mover_count(&self) -> usize {
        self.objects.iter().filter(|o| o.mover).count()
    }

    pub fn triangle_count(&self) -> usize {
        self.objects.iter().map(|o| o.triangles).sum()
    }
}

fn positive(v: Option<f64>, field: &str, out: &mut Vec<String>) -> f64 {
    match v {
        Some(x) if x > 0.0 && x.is_finite() => x,
        Some(x) => {
            out.push(format!("`{field}` must be strictly positive, got {x}"));
            f64::NAN
        }
        None => {
            out.push(format!("missing `{field}`"));
            f64::NAN
        }
    }
}

fn build_shape(
    obj: &ObjectDocument,
    base_dir: Option<&Path>,
    problems: &mut Vec<String>,
) -> Option<Shape> {
    let shape = match obj.kind {
        ObjectKind::Plane => Shape::Plane,
        ObjectKind::Box => match obj.half_extents {
            Some(h) if h.iter().all(|&x| x > 0.0 && x.is_finite()) => Shape::Box {
                half_extents: Vector3::from(h),
            },
            Some(h) => {
                problems.push(format!("`half_extents` must be strictly positive, got {h:?}"));
                return None;
            }
            None => {
                problems.push("missing `half_extents`".into());
                return None;
            }
        },
        ObjectKind::Cylinder => {
            let radius = positive(obj.radius, "radius", problems);
            let height = positive(obj.height, "height", problems);
            if radius.is_nan() || height.is_nan() {
                return None;
            }
            Shape::Cylinder { radius, height }
        }
        ObjectKind::Sphere => {
            let radius = positive(obj.radius, "radius", problems);
            if radius.is_nan() {
                return None;
            }
            Shape::Sphere { radius }
        }
        ObjectKind::Mesh => {
            let Some(file) = &obj.mesh_file else {
                problems.push("missing `mesh_file`".into());
                return None;
            };
            let path: PathBuf = match base_dir {
                Some(dir) => dir.join(file),
                None => PathBuf::from(file),
            };
            let text = match std::fs::read_to_string(&path) {
                Ok(t) => t,
                Err(e) => {
                    problems.push(format!("cannot read mesh {}: {e}", path.display()));
                    return None;
                }
            };
            let mesh: TriangleMesh = match parse_obj(&text) {
                Ok(m) => m,
                Err(e) => {
                    problems.push(format!("mesh {}: {e}", path.display()));
                    return None;
                }
            };
            let degenerate = mesh.degenerate_triangles();
            if !degenerate.is_empty() {
                for i in degenerate {
                    problems.push(format!(
                        "degenerate triangle {i} (area {:.3e} m^2)",
                        mesh.triangle_area(i)
                    ));
                }
                return None;
            }
            Shape::Mesh(Arc::new(mesh))
        }
    };
    Some(shape)
}

fn build_motion(doc: &MotionDocument, problems: &mut Vec<String>) -> Option<MotionScript> {
    if doc.waypoints.is_empty() {
        problems.push("motion has no waypoints".into());
        return None;
    }
    if doc.waypoints[0].t != 0.0 {
        problems.push(format!(
            "first waypoint time must be 0, got {}",
            doc.waypoints[0].t
        ));
        return None;
    }
    for (i, w) in doc.waypoints.windows(2).enumerate() {
        if !(w[1].t > w[0].t) {
            problems.push(format!(
                "waypoint times must increase strictly (waypoint {} at t={} after t={})",
                i + 1,
                w[1].t,
                w[0].t
            ));
            return None;
        }
    }
    if doc.looping && doc.waypoints.len() < 2 {
        problems.push("looping motion needs at least two waypoints".into());
        return None;
    }
    let waypoints = doc
        .waypoints
        .iter()
        .map(|w| {
            (
                w.t,
                Pose::from_xyz_rpy(w.xyz, w.rpy_deg.map(f64::to_radians)),
            )
        })
        .collect();
    Some(MotionScript {
        waypoints,
        looping: doc.looping,
    })
}

/// Validate every object, collecting all violations. Returns the built
/// objects alongside the report; the objects are only complete when the
/// report is valid.
pub(crate) fn check_document(
    doc: &SceneDocument,
    base_dir: Option<&Path>,
) -> (SceneReport, Vec<SceneObject>) {
    let mut violations = Vec::new();
    let mut summaries = Vec::new();
    let mut objects = Vec::new();
    let mut seen = HashSet::new();

    for obj in &doc.objects {
        let mut problems = Vec::new();
        if !seen.insert(obj.id.as_str()) {
            problems.push(format!("duplicate object id `{}`", obj.id));
        }
        if obj.pose.xyz.iter().chain(&obj.pose.rpy_deg).any(|x| !x.is_finite()) {
            problems.push("non-finite pose".into());
        }
        let shape = build_shape(obj, base_dir, &mut problems);
        let motion = obj
            .motion
            .as_ref()
            .and_then(|m| build_motion(m, &mut problems));
        summaries.push(ObjectSummary {
            id: obj.id.clone(),
            kind: obj.kind,
            triangles: shape.as_ref().map_or(0, Shape::triangle_count),
            mover: obj.motion.is_some(),
        });
        if let (Some(shape), true) = (shape, problems.is_empty()) {
            objects.push(SceneObject {
                id: Arc::from(obj.id.as_str()),
                geometry: GeometryPrimitive {
                    shape,
                    local_pose: obj.pose.to_pose(),
                },
                motion,
            });
        }
        violations.extend(problems.into_iter().map(|message| Violation {
            object: obj.id.clone(),
            message,
        }));
    }

    (
        SceneReport {
            name: doc.name.clone(),
            objects: summaries,
            violations,
        },
        objects,
    )
}
