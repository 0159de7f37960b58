//! Bounding volume hierarchy over world-space triangles.
//!
//! Instances are flattened into world space before construction. The tree is
//! built top-down with a binned surface-area heuristic over triangle
//! centroids (16 bins, at most 4 triangles per leaf) and stored as a flat
//! array in which the two children of an interior node are adjacent.

use super::{Aabb, Pose, TriangleMesh, Vec3};
use crate::error::{Error, Result};

const BIN_COUNT: usize = 16;
const MAX_LEAF_SIZE: usize = 4;
/// Upper bound on tree depth (root has depth 0).
pub const MAX_DEPTH: usize = 64;
/// Determinants below this magnitude are treated as parallel.
const PARALLEL_EPSILON: f64 = 1e-12;
/// Conservative widening of slab exit distances, 3 ulps plus rounding slack.
const SLAB_WIDEN: f64 = 1.0 + 4.0 * f64::EPSILON;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ray {
    pub origin: Vec3,
    pub direction: Vec3,
    pub t_min: f64,
    pub t_max: f64,
}

impl Ray {
    /// Normalizes `direction` and checks the range `0 ≤ t_min < t_max`.
    pub fn new(origin: Vec3, direction: Vec3, t_min: f64, t_max: f64) -> Result<Ray> {
        let norm = direction.norm();
        if !(norm > 0.0 && norm.is_finite()) || !origin.iter().all(|c| c.is_finite()) {
            return Err(Error::InvalidGeometry("degenerate ray".into()));
        }
        if !(t_min >= 0.0 && t_min < t_max) {
            return Err(Error::InvalidGeometry(format!(
                "ray range [{t_min}, {t_max}] is invalid"
            )));
        }
        Ok(Ray {
            origin,
            direction: direction / norm,
            t_min,
            t_max,
        })
    }

    pub fn at(&self, t: f64) -> Vec3 {
        self.origin + self.direction * t
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hit {
    pub t: f64,
    pub instance_id: u32,
    /// Index of the triangle within its instance's mesh.
    pub triangle_id: u32,
    pub point: Vec3,
}

/// A triangle in world space, tagged with where it came from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WorldTriangle {
    pub vertices: [Vec3; 3],
    pub instance_id: u32,
    pub triangle_id: u32,
}

impl WorldTriangle {
    fn bounds(&self) -> Aabb {
        Aabb::from_points(&self.vertices)
    }

    fn centroid(&self) -> Vec3 {
        (self.vertices[0] + self.vertices[1] + self.vertices[2]) / 3.0
    }
}

/// Slack on the barycentric bounds so rays through a shared edge cannot slip
/// between both neighbours to rounding.
const EDGE_EPSILON: f64 = 1e-12;

/// Möller–Trumbore ray/triangle test without backface culling. Returns the
/// ray parameter of the hit if it lies in `[ray.t_min, ray.t_max]`.
pub fn intersect_triangle(ray: &Ray, tri: &[Vec3; 3]) -> Option<f64> {
    let e1 = tri[1] - tri[0];
    let e2 = tri[2] - tri[0];
    let p = ray.direction.cross(&e2);
    let det = e1.dot(&p);
    if det.abs() < PARALLEL_EPSILON {
        return None;
    }
    let inv_det = 1.0 / det;
    let s = ray.origin - tri[0];
    let u = s.dot(&p) * inv_det;
    if !(-EDGE_EPSILON..=1.0 + EDGE_EPSILON).contains(&u) {
        return None;
    }
    let q = s.cross(&e1);
    let v = ray.direction.dot(&q) * inv_det;
    if v < -EDGE_EPSILON || u + v > 1.0 + EDGE_EPSILON {
        return None;
    }
    let t = e2.dot(&q) * inv_det;
    (t >= ray.t_min && t <= ray.t_max).then_some(t)
}

/// A flat BVH node. Leaves have `count > 0` and own
/// `primitives[first..first + count]`; interior nodes have `count == 0` and
/// children at `first` and `first + 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BvhNode {
    pub bounds: Aabb,
    pub first: u32,
    pub count: u32,
}

impl BvhNode {
    pub fn is_leaf(&self) -> bool {
        self.count > 0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Bvh {
    nodes: Vec<BvhNode>,
    /// Triangles in leaf order.
    primitives: Vec<WorldTriangle>,
    /// `order[slot]` is the flattened (input-order) id of `primitives[slot]`.
    order: Vec<u32>,
}

#[derive(Clone, Copy)]
struct BuildItem {
    bounds: Aabb,
    centroid: Vec3,
    id: u32,
}

impl Bvh {
    /// Flattens the posed instances into world space and builds the tree.
    pub fn build(instances: &[(TriangleMesh, Pose)]) -> Result<Bvh> {
        let mut triangles = Vec::new();
        for (inst, (mesh, pose)) in instances.iter().enumerate() {
            pose.validate()?;
            for (i, t) in mesh.triangles().iter().enumerate() {
                triangles.push(WorldTriangle {
                    vertices: t.map(|v| pose.transform_point(&mesh.vertices()[v as usize])),
                    instance_id: inst as u32,
                    triangle_id: i as u32,
                });
            }
        }
        Bvh::from_triangles(triangles)
    }

    pub fn from_triangles(triangles: Vec<WorldTriangle>) -> Result<Bvh> {
        if triangles.is_empty() {
            return Err(Error::InvalidGeometry("cannot build a BVH over an empty scene".into()));
        }
        if triangles.len() >= u32::MAX as usize {
            return Err(Error::InvalidGeometry("too many triangles".into()));
        }
        let mut items: Vec<BuildItem> = triangles
            .iter()
            .enumerate()
            .map(|(i, t)| BuildItem {
                bounds: t.bounds(),
                centroid: t.centroid(),
                id: i as u32,
            })
            .collect();
        let mut nodes = Vec::with_capacity(2 * triangles.len() / MAX_LEAF_SIZE + 1);
        nodes.push(BvhNode {
            bounds: Aabb::empty(),
            first: 0,
            count: 0,
        });
        build_node(&mut nodes, 0, &mut items, 0, 0);
        let order: Vec<u32> = items.iter().map(|it| it.id).collect();
        let primitives = order.iter().map(|&i| triangles[i as usize]).collect();
        Ok(Bvh {
            nodes,
            primitives,
            order,
        })
    }

    pub fn nodes(&self) -> &[BvhNode] {
        &self.nodes
    }

    /// Triangles in leaf order.
    pub fn primitives(&self) -> &[WorldTriangle] {
        &self.primitives
    }

    /// Permutation from leaf slot to flattened input id.
    pub fn order(&self) -> &[u32] {
        &self.order
    }

    pub fn bounds(&self) -> &Aabb {
        &self.nodes[0].bounds
    }

    pub fn depth(&self) -> usize {
        let mut max = 0;
        let mut stack = vec![(0usize, 0usize)];
        while let Some((n, d)) = stack.pop() {
            max = max.max(d);
            let node = &self.nodes[n];
            if !node.is_leaf() {
                stack.push((node.first as usize, d + 1));
                stack.push((node.first as usize + 1, d + 1));
            }
        }
        max
    }

    /// Checks the structural invariants: leaves contain their triangles,
    /// children lie inside parents, every triangle appears exactly once and
    /// the depth bound holds.
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::InvalidGeometry(m));
        let mut seen = vec![false; self.primitives.len()];
        for (i, node) in self.nodes.iter().enumerate() {
            if node.is_leaf() {
                let range = node.first as usize..(node.first + node.count) as usize;
                if range.len() > MAX_LEAF_SIZE {
                    return fail(format!("leaf {i} holds {} triangles", range.len()));
                }
                for slot in range {
                    let tri = &self.primitives[slot];
                    if !tri.vertices.iter().all(|v| node.bounds.contains(v)) {
                        return fail(format!("leaf {i} does not bound slot {slot}"));
                    }
                    let id = self.order[slot] as usize;
                    if std::mem::replace(&mut seen[id], true) {
                        return fail(format!("triangle {id} appears twice"));
                    }
                }
            } else {
                for c in [node.first, node.first + 1] {
                    if !node.bounds.contains_box(&self.nodes[c as usize].bounds) {
                        return fail(format!("node {i} does not bound child {c}"));
                    }
                }
            }
        }
        if let Some(id) = seen.iter().position(|s| !s) {
            return fail(format!("triangle {id} unreachable"));
        }
        if self.depth() > MAX_DEPTH {
            return fail(format!("depth {} exceeds {MAX_DEPTH}", self.depth()));
        }
        Ok(())
    }

    /// Nearest hit in `[ray.t_min, ray.t_max]`. Hits at exactly equal `t`
    /// resolve to the lowest flattened triangle id.
    pub fn intersect(&self, ray: &Ray) -> Option<Hit> {
        let inv_dir = ray.direction.map(|d| 1.0 / d);
        let mut best: Option<(f64, u32, usize)> = None;
        let mut best_t = ray.t_max;
        let mut stack = [0u32; 2 * MAX_DEPTH + 2];
        let mut top = 0usize;
        if slab_entry(&self.nodes[0].bounds, ray, &inv_dir, best_t).is_none() {
            return None;
        }
        stack[top] = 0;
        top += 1;
        while top > 0 {
            top -= 1;
            let node = &self.nodes[stack[top] as usize];
            if node.is_leaf() {
                let start = node.first as usize;
                for slot in start..start + node.count as usize {
                    let tri = &self.primitives[slot];
                    if let Some(t) = intersect_triangle(ray, &tri.vertices) {
                        let id = self.order[slot];
                        let better = match best {
                            None => true,
                            Some((bt, bid, _)) => t < bt || (t == bt && id < bid),
                        };
                        if better {
                            best = Some((t, id, slot));
                            best_t = t;
                        }
                    }
                }
                continue;
            }
            let left = node.first;
            let right = node.first + 1;
            let tl = slab_entry(&self.nodes[left as usize].bounds, ray, &inv_dir, best_t);
            let tr = slab_entry(&self.nodes[right as usize].bounds, ray, &inv_dir, best_t);
            match (tl, tr) {
                (Some(a), Some(b)) => {
                    let (near, far) = if a <= b { (left, right) } else { (right, left) };
                    stack[top] = far;
                    stack[top + 1] = near;
                    top += 2;
                }
                (Some(_), None) => {
                    stack[top] = left;
                    top += 1;
                }
                (None, Some(_)) => {
                    stack[top] = right;
                    top += 1;
                }
                (None, None) => {}
            }
        }
        best.map(|(t, _, slot)| {
            let tri = &self.primitives[slot];
            Hit {
                t,
                instance_id: tri.instance_id,
                triangle_id: tri.triangle_id,
                point: ray.at(t),
            }
        })
    }
}

/// Entry distance of the ray into `b`, clipped to `[ray.t_min, limit]`.
fn slab_entry(b: &Aabb, ray: &Ray, inv_dir: &Vec3, limit: f64) -> Option<f64> {
    let mut t0 = ray.t_min;
    let mut t1 = limit;
    for i in 0..3 {
        if ray.direction[i] == 0.0 {
            if ray.origin[i] < b.min[i] || ray.origin[i] > b.max[i] {
                return None;
            }
            continue;
        }
        let mut near = (b.min[i] - ray.origin[i]) * inv_dir[i];
        let mut far = (b.max[i] - ray.origin[i]) * inv_dir[i];
        if near > far {
            std::mem::swap(&mut near, &mut far);
        }
        far *= SLAB_WIDEN;
        t0 = t0.max(near);
        t1 = t1.min(far);
        if t0 > t1 {
            return None;
        }
    }
    Some(t0)
}

fn build_node(nodes: &mut Vec<BvhNode>, index: usize, items: &mut [BuildItem], offset: usize, depth: usize) {
    let bounds = items.iter().fold(Aabb::empty(), |acc, it| acc.union(&it.bounds));
    let n = items.len();
    if n <= MAX_LEAF_SIZE {
        nodes[index] = BvhNode {
            bounds,
            first: offset as u32,
            count: n as u32,
        };
        return;
    }

    let centroid_bounds = Aabb::from_points(items.iter().map(|it| &it.centroid));
    let levels_needed = usize::BITS as usize - (n - 1).leading_zeros() as usize;
    let force_median = depth + levels_needed + 1 >= MAX_DEPTH;
    let split = if force_median {
        None
    } else {
        sah_split(items, &centroid_bounds)
    };
    let mid = match split {
        Some((axis, bin)) => partition_by_bin(items, &centroid_bounds, axis, bin),
        None => median_split(items, &centroid_bounds),
    };

    let left = nodes.len();
    let placeholder = BvhNode {
        bounds: Aabb::empty(),
        first: 0,
        count: 0,
    };
    nodes.push(placeholder);
    nodes.push(placeholder);
    nodes[index] = BvhNode {
        bounds,
        first: left as u32,
        count: 0,
    };
    let (lo, hi) = items.split_at_mut(mid);
    build_node(nodes, left, lo, offset, depth + 1);
    build_node(nodes, left + 1, hi, offset + mid, depth + 1);
}

fn bin_of(c: f64, min: f64, extent: f64) -> usize {
    (((c - min) / extent * BIN_COUNT as f64) as usize).min(BIN_COUNT - 1)
}

/// Lowest-cost (axis, first right bin) under the surface-area heuristic, or
/// `None` when centroids coincide on every axis.
fn sah_split(items: &[BuildItem], cb: &Aabb) -> Option<(usize, usize)> {
    let extent = cb.extent();
    let mut best: Option<(f64, usize, usize)> = None;
    for axis in 0..3 {
        if !(extent[axis] > 0.0) {
            continue;
        }
        let mut counts = [0usize; BIN_COUNT];
        let mut boxes = [Aabb::empty(); BIN_COUNT];
        for it in items {
            let b = bin_of(it.centroid[axis], cb.min[axis], extent[axis]);
            counts[b] += 1;
            boxes[b] = boxes[b].union(&it.bounds);
        }
        let mut right_area = [0.0; BIN_COUNT];
        let mut right_count = [0usize; BIN_COUNT];
        let mut acc = Aabb::empty();
        let mut cnt = 0;
        for b in (1..BIN_COUNT).rev() {
            acc = acc.union(&boxes[b]);
            cnt += counts[b];
            right_area[b] = acc.surface_area();
            right_count[b] = cnt;
        }
        let mut acc = Aabb::empty();
        let mut cnt = 0;
        for b in 1..BIN_COUNT {
            acc = acc.union(&boxes[b - 1]);
            cnt += counts[b - 1];
            if cnt == 0 || right_count[b] == 0 {
                continue;
            }
            let cost = acc.surface_area() * cnt as f64 + right_area[b] * right_count[b] as f64;
            if best.is_none_or(|(c, _, _)| cost < c) {
                best = Some((cost, axis, b));
            }
        }
    }
    best.map(|(_, axis, bin)| (axis, bin))
}

/// Stable partition: items in bins `< bin` first. Returns the split index.
fn partition_by_bin(items: &mut [BuildItem], cb: &Aabb, axis: usize, bin: usize) -> usize {
    let extent = cb.extent()[axis];
    let min = cb.min[axis];
    items.sort_by_key(|it| bin_of(it.centroid[axis], min, extent) >= bin);
    items
        .iter()
        .take_while(|it| bin_of(it.centroid[axis], min, extent) < bin)
        .count()
}

fn median_split(items: &mut [BuildItem], cb: &Aabb) -> usize {
    let axis = cb.largest_axis();
    items.sort_by(|a, b| a.centroid[axis].total_cmp(&b.centroid[axis]).then(a.id.cmp(&b.id)));
    items.len() / 2
}
