//! Bounding volume hierarchy over bounded static items.

use nalgebra::Vector3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aabb {
    pub min: Vector3<f64>,
    pub max: Vector3<f64>,
}

impl Aabb {
    pub fn empty() -> Self {
        Self {
            min: Vector3::repeat(f64::INFINITY),
            max: Vector3::repeat(f64::NEG_INFINITY),
        }
    }

    pub fn from_points<'a>(points: impl IntoIterator<Item = &'a Vector3<f64>>) -> Self {
        let mut b = Self::empty();
        for p in points {
            b.min = b.min.inf(p);
            b.max = b.max.sup(p);
        }
        b
    }

    pub fn union(&self, other: &Aabb) -> Aabb {
        Aabb {
            min: self.min.inf(&other.min),
            max: self.max.sup(&other.max),
        }
    }

    /// Grow by a small absolute margin so boundary hits are never culled.
    pub fn padded(&self) -> Aabb {
        let pad = Vector3::repeat(1e-7) + (self.max - self.min).abs() * 1e-9;
        Aabb {
            min: self.min - pad,
            max: self.max + pad,
        }
    }

    pub fn centroid(&self) -> Vector3<f64> {
        (self.min + self.max) * 0.5
    }

    /// Slab test: does the ray enter the box at some `t <= t_max`?
    pub fn hit(&self, origin: &Vector3<f64>, inv_dir: &Vector3<f64>, t_max: f64) -> bool {
        let mut t0 = 0.0f64;
        let mut t1 = t_max;
        for a in 0..3 {
            let mut near = (self.min[a] - origin[a]) * inv_dir[a];
            let mut far = (self.max[a] - origin[a]) * inv_dir[a];
            if near > far {
                std::mem::swap(&mut near, &mut far);
            }
            // NaN (0 * inf) leaves the bound unchanged
            t0 = t0.max(near);
            t1 = t1.min(far);
            if t1 < t0 {
                return false;
            }
        }
        true
    }
}

#[derive(Debug, Clone)]
enum NodeKind {
    Inner { left: u32, right: u32 },
    Leaf { start: u32, count: u32 },
}

#[derive(Debug, Clone)]
struct Node {
    bounds: Aabb,
    kind: NodeKind,
}

const LEAF_SIZE: usize = 4;

/// Flat BVH storing item indices; the caller owns the items.
#[derive(Debug, Clone, Default)]
pub struct Bvh {
    nodes: Vec<Node>,
    order: Vec<u32>,
}

impl Bvh {
    pub fn build(bounds: &[Aabb]) -> Bvh {
        let mut bvh = Bvh {
            nodes: Vec::new(),
            order: (0..bounds.len() as u32).collect(),
        };
        if !bounds.is_empty() {
            let padded: Vec<Aabb> = bounds.iter().map(Aabb::padded).collect();
            let n = padded.len();
            bvh.build_node(&padded, 0, n);
        }
        bvh
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    fn build_node(&mut self, bounds: &[Aabb], start: usize, end: usize) -> u32 {
        let node_bounds = self.order[start..end]
            .iter()
            .fold(Aabb::empty(), |acc, &i| acc.union(&bounds[i as usize]));
        let idx = self.nodes.len() as u32;
        if end - start <= LEAF_SIZE {
            self.nodes.push(Node {
                bounds: node_bounds,
                kind: NodeKind::Leaf {
                    start: start as u32,
                    count: (end - start) as u32,
                },
            });
            return idx;
        }
        let centroids = Aabb::from_points(
            self.order[start..end]
                .iter()
                .map(|&i| bounds[i as usize].centroid())
                .collect::<Vec<_>>()
                .iter(),
        );
        let extent = centroids.max - centroids.min;
        let axis = extent.imax();
        let mid = start + (end - start) / 2;
        self.order[start..end].sort_by(|&a, &b| {
            let ca = bounds[a as usize].centroid()[axis];
            let cb = bounds[b as usize].centroid()[axis];
            ca.total_cmp(&cb).then(a.cmp(&b))
        });
        self.nodes.push(Node {
            bounds: node_bounds,
            kind: NodeKind::Leaf { start: 0, count: 0 },
        });
        let left = self.build_node(bounds, start, mid);
        let right = self.build_node(bounds, mid, end);
        self.nodes[idx as usize].kind = NodeKind::Inner { left, right };
        idx
    }

    /// Visit candidate items whose boxes the ray may enter before the current
    /// best distance. `visit` returns the new best distance bound.
    pub fn traverse(
        &self,
        origin: &Vector3<f64>,
        dir: &Vector3<f64>,
        mut t_max: f64,
        mut visit: impl FnMut(u32, f64) -> f64,
    ) {
        if self.nodes.is_empty() {
            return;
        }
        let inv = Vector3::new(1.0 / dir.x, 1.0 / dir.y, 1.0 / dir.z);
        let mut stack: Vec<u32> = Vec::with_capacity(64);
        stack.push(0);
        while let Some(n) = stack.pop() {
            let node = &self.nodes[n as usize];
            if !node.bounds.hit(origin, &inv, t_max) {
                continue;
            }
            match node.kind {
                NodeKind::Leaf { start, count } => {
                    for &item in &self.order[start as usize..(start + count) as usize] {
                        t_max = visit(item, t_max);
                    }
                }
                NodeKind::Inner { left, right } => {
                    stack.push(right);
                    stack.push(left);
                }
            }
        }
    }
}
