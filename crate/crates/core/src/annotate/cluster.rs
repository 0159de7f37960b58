//! Euclidean clustering and cluster-to-class assignment.

use std::collections::{BTreeMap, VecDeque};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Aabb, PointIndex, Vec3};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cluster {
    pub centroid: Vec3,
    pub min: Vec3,
    pub max: Vec3,
    pub point_count: usize,
    /// Class assigned by the annotator, if any.
    pub class: Option<u16>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterSet {
    pub points: Vec<Vec3>,
    /// Cluster id per point; `None` for points in components below the minimum
    /// size.
    pub assignment: Vec<Option<u32>>,
    pub clusters: Vec<Cluster>,
}

/// Connected components of the graph joining points at distance `<= d`.
///
/// Components smaller than `min_size` are left unassigned. Cluster ids are
/// dense and ordered by the lowest point index in each cluster.
pub fn euclidean_cluster(points: &[Vec3], d: f64, min_size: usize) -> ClusterSet {
    let n = points.len();
    let index = PointIndex::new(points, d.max(1e-6));
    let mut component = vec![usize::MAX; n];
    let mut members: Vec<Vec<usize>> = Vec::new();
    let mut queue = VecDeque::new();
    for seed in 0..n {
        if component[seed] != usize::MAX {
            continue;
        }
        let id = members.len();
        let mut group = vec![seed];
        component[seed] = id;
        queue.push_back(seed);
        while let Some(i) = queue.pop_front() {
            for j in index.within_radius(&points[i], d) {
                let j = j as usize;
                if component[j] == usize::MAX {
                    component[j] = id;
                    group.push(j);
                    queue.push_back(j);
                }
            }
        }
        members.push(group);
    }

    let mut assignment = vec![None; n];
    let mut clusters = Vec::new();
    for group in members.iter().filter(|g| g.len() >= min_size.max(1)) {
        let id = clusters.len() as u32;
        let bounds = Aabb::from_points(group.iter().map(|&i| &points[i]));
        let centroid = group.iter().map(|&i| points[i]).sum::<Vec3>() / group.len() as f64;
        for &i in group {
            assignment[i] = Some(id);
        }
        clusters.push(Cluster {
            centroid,
            min: bounds.min,
            max: bounds.max,
            point_count: group.len(),
            class: None,
        });
    }
    ClusterSet {
        points: points.to_vec(),
        assignment,
        clusters,
    }
}

impl ClusterSet {
    /// Applies `cluster id → class id` assignments.
    pub fn assign(&mut self, assignments: &BTreeMap<u32, u16>) -> Result<()> {
        for (&id, &class) in assignments {
            let c = self
                .clusters
                .get_mut(id as usize)
                .ok_or_else(|| Error::Labels(format!("no cluster {id}")))?;
            c.class = Some(class);
        }
        Ok(())
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string(self).expect("cluster set serializes");
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<ClusterSet> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let set: ClusterSet = serde_json::from_str(&text).map_err(|e| Error::Json {
            path: path.to_path_buf(),
            source: e,
        })?;
        if set.assignment.len() != set.points.len()
            || set
                .assignment
                .iter()
                .flatten()
                .any(|&c| c as usize >= set.clusters.len())
        {
            return Err(Error::Labels(format!("{}: inconsistent cluster set", path.display())));
        }
        Ok(set)
    }
}

/// Parses an assignment file of `cluster_id class_name` lines. Blank lines
/// and lines starting with `#` are ignored.
pub fn parse_assignments(text: &str, class_names: &[String], path: &Path) -> Result<BTreeMap<u32, u16>> {
    let mut out = BTreeMap::new();
    for (no, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let err = |message: String| Error::TextFormat {
            path: path.to_path_buf(),
            line: no + 1,
            message,
        };
        let fields: Vec<&str> = line.split_whitespace().collect();
        let [id, class] = fields[..] else {
            return Err(err(format!("expected `cluster_id class_name`, got {line:?}")));
        };
        let id: u32 = id.parse().map_err(|_| err(format!("bad cluster id {id:?}")))?;
        let class = class_names
            .iter()
            .position(|c| c == class)
            .ok_or_else(|| err(format!("unknown class {class:?}")))?;
        if out.insert(id, class as u16).is_some() {
            return Err(err(format!("cluster {id} assigned twice")));
        }
    }
    Ok(out)
}

pub fn read_assignments(path: &Path, class_names: &[String]) -> Result<BTreeMap<u32, u16>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_assignments(&text, class_names, path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Union-find over all pairs: the reference for connected components.
    fn oracle(points: &[Vec3], d: f64) -> Vec<usize> {
        let mut parent: Vec<usize> = (0..points.len()).collect();
        fn find(p: &mut [usize], i: usize) -> usize {
            let mut r = i;
            while p[r] != r {
                r = p[r];
            }
            p[i] = r;
            r
        }
        for i in 0..points.len() {
            for j in i + 1..points.len() {
                if (points[i] - points[j]).norm() <= d {
                    let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                    parent[a.max(b)] = a.min(b);
                }
            }
        }
        (0..points.len()).map(|i| find(&mut parent, i)).collect()
    }

    #[test]
    fn separated_blobs() {
        let mut pts = Vec::new();
        for c in [0.0, 10.0, 20.0] {
            for i in 0..5 {
                pts.push(Vec3::new(c + 0.3 * i as f64, 0.0, 0.0));
            }
        }
        pts.push(Vec3::new(50.0, 0.0, 0.0));
        let set = euclidean_cluster(&pts, 0.5, 2);
        assert_eq!(set.clusters.len(), 3);
        assert_eq!(set.assignment[15], None);
        assert_eq!(set.assignment[0], Some(0));
        assert_eq!(set.assignment[14], Some(2));
        assert_eq!(set.clusters[1].point_count, 5);
        assert!((set.clusters[1].centroid.x - 10.6).abs() < 1e-12);
    }

    #[test]
    fn distance_is_inclusive() {
        let pts = vec![Vec3::zeros(), Vec3::new(0.5, 0.0, 0.0)];
        assert_eq!(euclidean_cluster(&pts, 0.5, 1).clusters.len(), 1);
        assert_eq!(euclidean_cluster(&pts, 0.49, 1).clusters.len(), 2);
    }

    #[test]
    fn file_round_trip_is_exact() {
        let pts: Vec<Vec3> = (0..40)
            .map(|i| Vec3::new(0.1 * i as f64 + 1e-13, (i as f64).sqrt() / 3.0, -0.7 / (i as f64 + 1.0)))
            .collect();
        let set = euclidean_cluster(&pts, 0.15, 1);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.json");
        set.write(&path).unwrap();
        let back = ClusterSet::read(&path).unwrap();
        for (a, b) in set.points.iter().zip(&back.points) {
            assert_eq!(a.map(f64::to_bits), b.map(f64::to_bits));
        }
        assert_eq!(set.assignment, back.assignment);
    }

    #[test]
    fn assignment_file() {
        let names: Vec<String> = ["other", "tractor"].map(String::from).to_vec();
        let p = Path::new("a.txt");
        let m = parse_assignments("# x\n0 tractor\n\n3 other\n", &names, p).unwrap();
        assert_eq!(m.get(&0), Some(&1));
        assert_eq!(m.get(&3), Some(&0));
        assert!(matches!(
            parse_assignments("0 truck", &names, p),
            Err(Error::TextFormat { line: 1, .. })
        ));
        assert!(parse_assignments("0 other\n0 tractor", &names, p).is_err());
        assert!(parse_assignments("x other", &names, p).is_err());
    }

    proptest! {
        #[test]
        fn matches_union_find(
            pts in prop::collection::vec(prop::array::uniform3(0.0..6.0f64), 1..120),
            d in 0.2..1.5f64,
        ) {
            let pts: Vec<Vec3> = pts.into_iter().map(Vec3::from).collect();
            let set = euclidean_cluster(&pts, d, 1);
            let roots = oracle(&pts, d);
            for i in 0..pts.len() {
                for j in 0..pts.len() {
                    prop_assert_eq!(roots[i] == roots[j], set.assignment[i] == set.assignment[j]);
                }
            }
            // Ids ordered by lowest member index.
            let mut seen = 0u32;
            for a in set.assignment.iter().flatten() {
                prop_assert!(*a <= seen);
                if *a == seen { seen += 1; }
            }
            prop_assert_eq!(seen as usize, set.clusters.len());
        }
    }
}
