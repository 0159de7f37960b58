use std::collections::HashMap;

use super::Vec3;

type Cell = [i64; 3];

/// Uniform voxel hash grid over a point set.
///
/// Queries scan the ring of cells that can contain a point within the query
/// radius and return exactly what a linear scan would: the closest point with
/// `distance <= radius`, ties broken by the lowest point id.
#[derive(Debug, Clone)]
pub struct PointIndex {
    cell_size: f64,
    points: Vec<Vec3>,
    cells: HashMap<Cell, Vec<u32>>,
}

impl PointIndex {
    /// Indexes `points`; ids are positions in the slice. `cell_size` must be
    /// positive.
    pub fn new(points: &[Vec3], cell_size: f64) -> PointIndex {
        assert!(cell_size > 0.0 && cell_size.is_finite(), "cell size must be positive");
        let mut cells: HashMap<Cell, Vec<u32>> = HashMap::new();
        for (i, p) in points.iter().enumerate() {
            cells.entry(cell_of(p, cell_size)).or_default().push(i as u32);
        }
        PointIndex {
            cell_size,
            points: points.to_vec(),
            cells,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Vec3] {
        &self.points
    }

    pub fn cell_size(&self) -> f64 {
        self.cell_size
    }

    /// Closest indexed point within `radius`, as `(id, distance)`.
    pub fn nearest_neighbor(&self, query: &Vec3, radius: f64) -> Option<(u32, f64)> {
        let r2 = radius * radius;
        let mut best: Option<(u32, f64)> = None;
        self.for_each_candidate(query, radius, |id, d2| {
            if d2 <= r2 {
                let better = match best {
                    None => true,
                    Some((bid, bd2)) => d2 < bd2 || (d2 == bd2 && id < bid),
                };
                if better {
                    best = Some((id, d2));
                }
            }
        });
        best.map(|(id, d2)| (id, d2.sqrt()))
    }

    /// Ids of all points with `distance <= radius`, in ascending order.
    pub fn within_radius(&self, query: &Vec3, radius: f64) -> Vec<u32> {
        let r2 = radius * radius;
        let mut out = Vec::new();
        self.for_each_candidate(query, radius, |id, d2| {
            if d2 <= r2 {
                out.push(id);
            }
        });
        out.sort_unstable();
        out
    }

    fn for_each_candidate(&self, query: &Vec3, radius: f64, mut f: impl FnMut(u32, f64)) {
        if self.points.is_empty() || !(radius > 0.0) {
            return;
        }
        let lo = cell_of(&query.add_scalar(-radius), self.cell_size);
        let hi = cell_of(&query.add_scalar(radius), self.cell_size);
        let span: i64 = (0..3).map(|i| hi[i] - lo[i] + 1).product();
        if span as usize > self.cells.len() {
            // Huge radius relative to the grid: visiting occupied cells is cheaper.
            for ids in self.cells.values() {
                for &id in ids {
                    f(id, (self.points[id as usize] - query).norm_squared());
                }
            }
            return;
        }
        for x in lo[0]..=hi[0] {
            for y in lo[1]..=hi[1] {
                for z in lo[2]..=hi[2] {
                    if let Some(ids) = self.cells.get(&[x, y, z]) {
                        for &id in ids {
                            f(id, (self.points[id as usize] - query).norm_squared());
                        }
                    }
                }
            }
        }
    }
}

fn cell_of(p: &Vec3, size: f64) -> Cell {
    [0, 1, 2].map(|i| (p[i] / size).floor() as i64)
}
