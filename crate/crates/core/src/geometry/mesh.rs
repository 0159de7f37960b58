use std::collections::HashMap;

use super::{Aabb, Pose, Vec3};
use crate::error::{Error, Result};

/// Indexed triangle soup with cached bounds.
#[derive(Debug, Clone, PartialEq)]
pub struct TriangleMesh {
    vertices: Vec<Vec3>,
    triangles: Vec<[u32; 3]>,
    bounds: Aabb,
}

impl TriangleMesh {
    /// Builds a mesh, checking that every index is in range and every vertex
    /// is finite. Zero triangles is allowed here; loaders reject it.
    pub fn new(vertices: Vec<Vec3>, triangles: Vec<[u32; 3]>) -> Result<Self> {
        if let Some(v) = vertices.iter().position(|v| !v.iter().all(|c| c.is_finite())) {
            return Err(Error::InvalidGeometry(format!("vertex {v} is not finite")));
        }
        let n = vertices.len();
        if let Some(t) = triangles.iter().position(|t| t.iter().any(|&i| i as usize >= n)) {
            return Err(Error::InvalidGeometry(format!(
                "triangle {t} references a vertex >= {n}"
            )));
        }
        let bounds = Aabb::from_points(&vertices);
        Ok(TriangleMesh {
            vertices,
            triangles,
            bounds,
        })
    }

    pub fn empty() -> Self {
        TriangleMesh {
            vertices: Vec::new(),
            triangles: Vec::new(),
            bounds: Aabb::empty(),
        }
    }

    pub fn vertices(&self) -> &[Vec3] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[u32; 3]] {
        &self.triangles
    }

    pub fn bounds(&self) -> &Aabb {
        &self.bounds
    }

    pub fn triangle_count(&self) -> usize {
        self.triangles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triangles.is_empty()
    }

    pub fn triangle(&self, i: usize) -> [Vec3; 3] {
        let [a, b, c] = self.triangles[i];
        [
            self.vertices[a as usize],
            self.vertices[b as usize],
            self.vertices[c as usize],
        ]
    }

    /// Mean of all vertices.
    pub fn centroid(&self) -> Vec3 {
        if self.vertices.is_empty() {
            return Vec3::zeros();
        }
        self.vertices.iter().sum::<Vec3>() / self.vertices.len() as f64
    }

    /// Applies `v ↦ scale·R·v + t` to every vertex.
    pub fn transform(&self, pose: &Pose, scale: f64) -> Result<TriangleMesh> {
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(Error::InvalidGeometry(format!("scale must be positive, got {scale}")));
        }
        pose.validate()?;
        if scale == 1.0 && *pose == Pose::identity() {
            return Ok(self.clone());
        }
        let vertices = self
            .vertices
            .iter()
            .map(|v| pose.rotation * (v * scale) + pose.translation)
            .collect();
        TriangleMesh::new(vertices, self.triangles.clone())
    }

    /// Keeps the triangles whose three vertices all lie in the closed `region`.
    /// Unreferenced vertices are dropped; the survivors keep their relative
    /// order.
    pub fn crop(&self, region: &Aabb) -> TriangleMesh {
        let inside: Vec<bool> = self.vertices.iter().map(|v| region.contains(v)).collect();
        let kept: Vec<[u32; 3]> = self
            .triangles
            .iter()
            .filter(|t| t.iter().all(|&i| inside[i as usize]))
            .copied()
            .collect();
        let mut used = vec![false; self.vertices.len()];
        for t in &kept {
            for &i in t {
                used[i as usize] = true;
            }
        }
        let mut remap = vec![u32::MAX; self.vertices.len()];
        let mut vertices = Vec::new();
        for (i, v) in self.vertices.iter().enumerate() {
            if used[i] {
                remap[i] = vertices.len() as u32;
                vertices.push(*v);
            }
        }
        let triangles = kept.iter().map(|t| t.map(|i| remap[i as usize])).collect();
        let bounds = Aabb::from_points(&vertices);
        TriangleMesh {
            vertices,
            triangles,
            bounds,
        }
    }

    /// Merges vertices that fall into the same `tolerance`-sized cell. The
    /// first vertex of a cell represents it.
    pub fn weld(&self, tolerance: f64) -> TriangleMesh {
        let mut cells: HashMap<[i64; 3], u32> = HashMap::new();
        let mut vertices = Vec::new();
        let remap: Vec<u32> = self
            .vertices
            .iter()
            .map(|v| {
                let key = [0, 1, 2].map(|i| (v[i] / tolerance).round() as i64);
                *cells.entry(key).or_insert_with(|| {
                    vertices.push(*v);
                    (vertices.len() - 1) as u32
                })
            })
            .collect();
        let triangles = self.triangles.iter().map(|t| t.map(|i| remap[i as usize])).collect();
        let bounds = Aabb::from_points(&vertices);
        TriangleMesh {
            vertices,
            triangles,
            bounds,
        }
    }

    /// Appends `other`, offsetting its indices.
    pub fn append(&mut self, other: &TriangleMesh) {
        let base = self.vertices.len() as u32;
        self.vertices.extend_from_slice(&other.vertices);
        self.triangles
            .extend(other.triangles.iter().map(|t| t.map(|i| i + base)));
        self.bounds = self.bounds.union(&other.bounds);
    }

    /// Closed axis-aligned box, 12 triangles.
    pub fn cuboid(min: Vec3, max: Vec3) -> TriangleMesh {
        let v = |x: bool, y: bool, z: bool| {
            Vec3::new(
                if x { max.x } else { min.x },
                if y { max.y } else { min.y },
                if z { max.z } else { min.z },
            )
        };
        let vertices = vec![
            v(false, false, false),
            v(true, false, false),
            v(true, true, false),
            v(false, true, false),
            v(false, false, true),
            v(true, false, true),
            v(true, true, true),
            v(false, true, true),
        ];
        let triangles = vec![
            [0, 2, 1],
            [0, 3, 2],
            [4, 5, 6],
            [4, 6, 7],
            [0, 1, 5],
            [0, 5, 4],
            [1, 2, 6],
            [1, 6, 5],
            [2, 3, 7],
            [2, 7, 6],
            [3, 0, 4],
            [3, 4, 7],
        ];
        TriangleMesh::new(vertices, triangles).expect("cuboid indices are valid")
    }

    /// Flat grid in the z = `z` plane over `[min.0, max.0] × [min.1, max.1]`
    /// with `nx × ny` cells, two triangles per cell.
    pub fn grid(min: (f64, f64), max: (f64, f64), z: f64, nx: usize, ny: usize) -> TriangleMesh {
        let mut vertices = Vec::with_capacity((nx + 1) * (ny + 1));
        for j in 0..=ny {
            for i in 0..=nx {
                let x = min.0 + (max.0 - min.0) * i as f64 / nx as f64;
                let y = min.1 + (max.1 - min.1) * j as f64 / ny as f64;
                vertices.push(Vec3::new(x, y, z));
            }
        }
        let idx = |i: usize, j: usize| (j * (nx + 1) + i) as u32;
        let mut triangles = Vec::with_capacity(nx * ny * 2);
        for j in 0..ny {
            for i in 0..nx {
                triangles.push([idx(i, j), idx(i + 1, j), idx(i + 1, j + 1)]);
                triangles.push([idx(i, j), idx(i + 1, j + 1), idx(i, j + 1)]);
            }
        }
        TriangleMesh::new(vertices, triangles).expect("grid indices are valid")
    }
}
