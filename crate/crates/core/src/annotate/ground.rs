//! Ground segmentation: RANSAC plane fit with a height-threshold fallback.

use nalgebra::Matrix3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::geometry::Vec3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroundMethod {
    Ransac,
    ZThreshold,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GroundParams {
    pub method: GroundMethod,
    pub iterations: usize,
    pub inlier_distance_m: f64,
    /// Planes steeper than this are not considered ground.
    pub max_slope_deg: f64,
    /// Below this inlier fraction the RANSAC result is discarded in favour of
    /// the height threshold.
    pub min_inlier_ratio: f64,
    /// Points with `z <` this value are ground under the height threshold,
    /// in the coordinates of the input cloud.
    pub z_threshold_m: f64,
    pub seed: u64,
}

impl Default for GroundParams {
    fn default() -> Self {
        GroundParams {
            method: GroundMethod::Ransac,
            iterations: 200,
            inlier_distance_m: 0.15,
            max_slope_deg: 15.0,
            min_inlier_ratio: 0.2,
            z_threshold_m: 0.2,
            seed: 0,
        }
    }
}

/// Plane `n·p = d` with unit normal pointing up.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Plane {
    pub normal: Vec3,
    pub offset: f64,
}

impl Plane {
    fn through(a: &Vec3, b: &Vec3, c: &Vec3) -> Option<Plane> {
        let n = (b - a).cross(&(c - a));
        let len = n.norm();
        if len < 1e-12 {
            return None;
        }
        let mut normal = n / len;
        if normal.z < 0.0 {
            normal = -normal;
        }
        Some(Plane {
            normal,
            offset: normal.dot(a),
        })
    }

    pub fn distance(&self, p: &Vec3) -> f64 {
        (self.normal.dot(p) - self.offset).abs()
    }

    /// Angle between the normal and +z.
    pub fn slope(&self) -> f64 {
        self.normal.z.clamp(-1.0, 1.0).acos()
    }

    /// Least-squares plane through `points` (smallest covariance eigenvector).
    pub fn fit(points: &[Vec3]) -> Option<Plane> {
        if points.len() < 3 {
            return None;
        }
        let c = points.iter().sum::<Vec3>() / points.len() as f64;
        let mut cov = Matrix3::zeros();
        for p in points {
            let d = p - c;
            cov += d * d.transpose();
        }
        let eig = cov.symmetric_eigen();
        let (i, _) = eig.eigenvalues.iter().enumerate().min_by(|a, b| a.1.total_cmp(b.1))?;
        let mut normal: Vec3 = eig.eigenvectors.column(i).into_owned();
        if normal.z < 0.0 {
            normal = -normal;
        }
        Some(Plane {
            normal,
            offset: normal.dot(&c),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundResult {
    /// `true` for ground points, in input order.
    pub mask: Vec<bool>,
    /// The fitted plane, or `None` when the height threshold was used.
    pub plane: Option<Plane>,
}

impl GroundResult {
    pub fn ground_count(&self) -> usize {
        self.mask.iter().filter(|&&g| g).count()
    }
}

fn threshold(points: &[Vec3], z: f64) -> GroundResult {
    GroundResult {
        mask: points.iter().map(|p| p.z < z).collect(),
        plane: None,
    }
}

/// Classifies points as ground or non-ground.
pub fn remove_ground(points: &[Vec3], params: &GroundParams) -> GroundResult {
    if params.method == GroundMethod::ZThreshold || points.len() < 3 {
        return threshold(points, params.z_threshold_m);
    }
    let max_slope = params.max_slope_deg.to_radians();
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let n = points.len();
    let t = params.inlier_distance_m;
    // Truncated quadratic loss: a band that merely holds more points loses to
    // one that fits them tightly.
    let cost = |pl: &Plane| points.iter().map(|p| pl.distance(p).min(t).powi(2)).sum::<f64>();
    let mut best: Option<(Plane, f64)> = None;
    for _ in 0..params.iterations {
        let i = rng.random_range(0..n);
        let mut j = rng.random_range(0..n - 1);
        if j >= i {
            j += 1;
        }
        let mut k = rng.random_range(0..n - 2);
        for m in [i.min(j), i.max(j)] {
            if k >= m {
                k += 1;
            }
        }
        let Some(pl) = Plane::through(&points[i], &points[j], &points[k]) else {
            continue;
        };
        if pl.slope() > max_slope {
            continue;
        }
        let c = cost(&pl);
        if best.is_none_or(|(_, b)| c < b) {
            best = Some((pl, c));
        }
    }
    let Some((mut plane, _)) = best else {
        return threshold(points, params.z_threshold_m);
    };
    // Least-squares refits over narrowing bands shed the clutter resting on
    // the ground.
    for band in [t, t / 2.0, t / 4.0] {
        let support: Vec<Vec3> = points.iter().filter(|p| plane.distance(p) <= band).copied().collect();
        match Plane::fit(&support) {
            Some(refit) if refit.slope() <= max_slope => plane = refit,
            _ => break,
        }
    }
    let inliers = points.iter().filter(|p| plane.distance(p) <= t).count();
    if (inliers as f64) < params.min_inlier_ratio * n as f64 {
        return threshold(points, params.z_threshold_m);
    }
    GroundResult {
        mask: points
            .iter()
            .map(|p| plane.distance(p) <= params.inlier_distance_m)
            .collect(),
        plane: Some(plane),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tilted_scene(tilt_deg: f64) -> (Vec<Vec3>, Vec<bool>) {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let s = tilt_deg.to_radians().tan();
        let mut pts = Vec::new();
        let mut truth = Vec::new();
        for _ in 0..4000 {
            let (x, y) = (rng.random_range(-20.0..20.0), rng.random_range(-20.0..20.0));
            pts.push(Vec3::new(x, y, s * x + rng.random_range(-0.03..0.03)));
            truth.push(true);
        }
        // A box standing on the slope.
        for _ in 0..800 {
            let (x, y, h) = (
                rng.random_range(2.0..5.0),
                rng.random_range(2.0..5.0),
                rng.random_range(0.5..3.0),
            );
            pts.push(Vec3::new(x, y, s * x + h));
            truth.push(false);
        }
        (pts, truth)
    }

    #[test]
    fn ransac_handles_tilted_ground() {
        let (pts, truth) = tilted_scene(5.0);
        let r = remove_ground(&pts, &GroundParams::default());
        assert!(r.plane.is_some());
        let agree = r.mask.iter().zip(&truth).filter(|(a, b)| a == b).count();
        assert!(agree as f64 / pts.len() as f64 > 0.99, "{agree}");
        // A flat height threshold mislabels much of the slope.
        let flat = remove_ground(
            &pts,
            &GroundParams {
                method: GroundMethod::ZThreshold,
                ..Default::default()
            },
        );
        let agree_flat = flat.mask.iter().zip(&truth).filter(|(a, b)| a == b).count();
        assert!((agree_flat as f64 / pts.len() as f64) < 0.9);
    }

    #[test]
    fn low_clutter_does_not_lift_the_plane() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut pts: Vec<Vec3> = (0..3000)
            .map(|_| Vec3::new(rng.random_range(-20.0..20.0), rng.random_range(-20.0..20.0), -2.0))
            .collect();
        // Bottoms of walls and wheels rising from the ground.
        pts.extend((0..1500).map(|_| Vec3::new(rng.random_range(-20.0..20.0), 6.0, -2.0 + rng.random_range(0.0..0.3))));
        let r = remove_ground(&pts, &GroundParams::default());
        let pl = r.plane.unwrap();
        assert!((pl.offset + 2.0).abs() < 0.005 && pl.normal.z > 0.9999, "{pl:?}");
    }

    #[test]
    fn falls_back_without_a_dominant_plane() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let pts: Vec<Vec3> = (0..500)
            .map(|_| Vec3::new(rng.random(), rng.random(), rng.random_range(-50.0..50.0)))
            .collect();
        let r = remove_ground(&pts, &GroundParams::default());
        assert!(r.plane.is_none());
        assert_eq!(r.ground_count(), pts.iter().filter(|p| p.z < 0.2).count());
    }

    #[test]
    fn deterministic_for_a_seed() {
        let (pts, _) = tilted_scene(3.0);
        let p = GroundParams::default();
        assert_eq!(remove_ground(&pts, &p), remove_ground(&pts, &p));
    }

    #[test]
    fn plane_fit_recovers_normal() {
        let pts: Vec<Vec3> = (0..50)
            .map(|i| {
                let (x, y) = ((i % 7) as f64, (i / 7) as f64);
                Vec3::new(x, y, 0.1 * x - 0.2 * y + 3.0)
            })
            .collect();
        let pl = Plane::fit(&pts).unwrap();
        let expect = Vec3::new(-0.1, 0.2, 1.0).normalize();
        assert!((pl.normal - expect).norm() < 1e-9);
        assert!(pts.iter().all(|p| pl.distance(p) < 1e-9));
    }
}
