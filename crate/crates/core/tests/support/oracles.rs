//! Independent oracles: brute-force and recomputed references the library
//! results are checked against.

use std::collections::BTreeMap;

use lidarforge::annotate::ClusterSet;
use lidarforge::dataset::downsample;
use lidarforge::geometry::{intersect_triangle, Ray, Vec3, WorldTriangle};
use lidarforge::lidar::LabeledPointCloud;
use lidarforge::scene::{Asset, PlacementRules, SceneDescription};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use super::class_names;

/// Closest hit over every triangle; ties go to the lowest index.
pub fn brute_force(tris: &[WorldTriangle], ray: &Ray) -> Option<(f64, usize)> {
    let mut best: Option<(f64, usize)> = None;
    for (i, t) in tris.iter().enumerate() {
        if let Some(d) = intersect_triangle(ray, &t.vertices) {
            if d >= ray.t_min && d <= ray.t_max && best.is_none_or(|(b, _)| d < b) {
                best = Some((d, i));
            }
        }
    }
    best
}

pub fn random_triangles(n: usize, seed: u64) -> Vec<WorldTriangle> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let c = Vec3::new(
                rng.random_range(-50.0..50.0),
                rng.random_range(-50.0..50.0),
                rng.random_range(-50.0..50.0),
            );
            let mut v = || {
                c + Vec3::new(
                    rng.random_range(-3.0..3.0),
                    rng.random_range(-3.0..3.0),
                    rng.random_range(-3.0..3.0),
                )
            };
            WorldTriangle {
                vertices: [v(), v(), v()],
                instance_id: 0,
                triangle_id: i as u32,
            }
        })
        .collect()
}

/// Recomputes each instance's footprint from its posed mesh and checks every
/// rule without trusting the values stored on the instance.
pub fn violations(scene: &SceneDescription, library: &[Asset], rules: &PlacementRules) -> Vec<String> {
    let mut out = Vec::new();
    let s = scene.sensor_pose.translation;
    let discs: Vec<(f64, f64, f64)> = scene
        .instances
        .iter()
        .map(|inst| {
            let mesh = library[inst.asset_index].mesh.transform(&inst.pose, 1.0).unwrap();
            let n = mesh.vertices().len() as f64;
            let c = mesh.vertices().iter().sum::<Vec3>() / n;
            let r = mesh
                .vertices()
                .iter()
                .map(|v| (v.x - c.x).hypot(v.y - c.y))
                .fold(0.0, f64::max);
            if mesh.bounds().min.z.abs() > 1e-9 {
                out.push(format!("{} floats at z={}", inst.asset, mesh.bounds().min.z));
            }
            (c.x, c.y, r)
        })
        .collect();
    for (i, &(x, y, r)) in discs.iter().enumerate() {
        let d = (x - s.x).hypot(y - s.y);
        if d > rules.sensor_max_range_m + 1e-9 {
            out.push(format!("instance {i} at {d} m, beyond sensor range"));
        }
        if !rules.area.contains(x, y) {
            out.push(format!("instance {i} outside area"));
        }
        for (j, &(x2, y2, r2)) in discs.iter().enumerate().skip(i + 1) {
            let gap = (x - x2).hypot(y - y2) - r - r2;
            if gap < rules.min_separation_m - 1e-9 {
                out.push(format!("instances {i},{j} gap {gap}"));
            }
        }
    }
    out
}

/// Inclusion counts of a k-of-n sampler over `rounds` seeds, tested with the
/// chi-square statistic corrected for sampling without replacement.
pub fn inclusion_p_value(n: usize, k: usize, rounds: u64) -> (f64, bool) {
    let mut cloud = LabeledPointCloud::new(class_names());
    cloud.points = (0..n).map(|i| Vec3::new(i as f64, 0.0, 0.0)).collect();
    cloud.labels = vec![0; n];
    let mut counts = vec![0u64; n];
    let mut subset_ok = true;
    for seed in 0..rounds {
        let d = downsample(&cloud, k, seed);
        subset_ok &= d.len() == k;
        let mut prev = -1.0;
        for p in &d.points {
            subset_ok &= p.x > prev && p.x.fract() == 0.0 && (p.x as usize) < n;
            prev = p.x;
            counts[p.x as usize] += 1;
        }
    }
    let q = k as f64 / n as f64;
    let e = rounds as f64 * q;
    let stat: f64 = counts.iter().map(|&c| (c as f64 - e).powi(2)).sum::<f64>() / (e * (1.0 - q));
    let p = 1.0 - ChiSquared::new((n - 1) as f64).unwrap().cdf(stat);
    (p, subset_ok)
}

/// Assigns each cluster the majority ground-truth label of its points.
pub fn assign_from_truth(set: &mut ClusterSet, truth: &[u16]) {
    let mut votes: Vec<BTreeMap<u16, usize>> = vec![BTreeMap::new(); set.clusters.len()];
    for (a, &l) in set.assignment.iter().zip(truth) {
        if let Some(c) = a {
            *votes[*c as usize].entry(l).or_default() += 1;
        }
    }
    for (c, v) in set.clusters.iter_mut().zip(votes) {
        c.class = v
            .into_iter()
            .max_by_key(|&(l, n)| (n, std::cmp::Reverse(l)))
            .map(|(l, _)| l);
    }
}

/// Connected components by union-find over every pair of points; returns one
/// root index per point.
pub fn union_find(points: &[Vec3], d: f64) -> Vec<usize> {
    fn find(p: &mut [usize], mut i: usize) -> usize {
        while p[i] != i {
            p[i] = p[p[i]];
            i = p[i];
        }
        i
    }
    let mut parent: Vec<usize> = (0..points.len()).collect();
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
