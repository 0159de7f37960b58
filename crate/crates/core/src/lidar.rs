//! Spinning multi-channel LiDAR model.
//!
//! A [`LidarSpec`] expands into a [`ScanPattern`]: one unit direction per
//! (ring, column) in the sensor frame, ring-major. [`simulate_scan`] casts
//! every ray of the pattern into a [`LabeledScene`] and keeps the nearest hit
//! inside the range gate, labeled with the class of the instance it struck.
//!
//! Range noise and dropout draw from a ChaCha8 stream keyed by
//! `(seed, ray index)`, so a scan does not depend on how rays are scheduled
//! across threads.

use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Bvh, Pose, Ray, Vec3};

/// Sensor geometry. Defaults model a 128-channel, ±45° unit spinning at
/// 10 Hz with 1024 columns per revolution and a 0.3–50 m range gate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LidarSpec {
    pub channels: u32,
    pub columns: u32,
    pub vertical_fov_deg: [f64; 2],
    /// Explicit per-channel elevations, strictly increasing. Overrides the
    /// uniform spacing derived from `vertical_fov_deg`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beam_elevations_deg: Option<Vec<f64>>,
    pub range_min_m: f64,
    pub range_max_m: f64,
    pub rotation_rate_hz: f64,
    pub range_noise_sigma_m: f64,
    pub dropout_prob: f64,
}

impl Default for LidarSpec {
    fn default() -> Self {
        LidarSpec {
            channels: 128,
            columns: 1024,
            vertical_fov_deg: [-45.0, 45.0],
            beam_elevations_deg: None,
            range_min_m: 0.3,
            range_max_m: 50.0,
            rotation_rate_hz: 10.0,
            range_noise_sigma_m: 0.0,
            dropout_prob: 0.0,
        }
    }
}

impl LidarSpec {
    /// Checks every field and reports all violations at once.
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.channels == 0 || self.channels > u16::MAX as u32 + 1 {
            problems.push(format!("channels must be in 1..=65536, got {}", self.channels));
        }
        if self.columns == 0 || self.columns > u16::MAX as u32 + 1 {
            problems.push(format!("columns must be in 1..=65536, got {}", self.columns));
        }
        let [lo, hi] = self.vertical_fov_deg;
        if !(lo.is_finite() && hi.is_finite() && lo >= -90.0 && hi <= 90.0) {
            problems.push(format!("vertical_fov_deg must lie in [-90, 90], got [{lo}, {hi}]"));
        } else if lo > hi || (lo == hi && self.channels > 1 && self.beam_elevations_deg.is_none()) {
            problems.push(format!("vertical_fov_deg min must be below max, got [{lo}, {hi}]"));
        }
        if let Some(table) = &self.beam_elevations_deg {
            if table.len() != self.channels as usize {
                problems.push(format!(
                    "beam_elevations_deg has {} entries for {} channels",
                    table.len(),
                    self.channels
                ));
            }
            if table.windows(2).any(|w| !(w[0] < w[1])) {
                problems.push("beam_elevations_deg must be strictly increasing".into());
            }
            if table.iter().any(|e| !(e.is_finite() && e.abs() <= 90.0)) {
                problems.push("beam_elevations_deg entries must lie in [-90, 90]".into());
            }
        }
        if !(self.range_min_m >= 0.0 && self.range_min_m < self.range_max_m && self.range_max_m.is_finite()) {
            problems.push(format!(
                "need 0 <= range_min_m < range_max_m, got {} and {}",
                self.range_min_m, self.range_max_m
            ));
        }
        if !(self.rotation_rate_hz > 0.0 && self.rotation_rate_hz.is_finite()) {
            problems.push(format!(
                "rotation_rate_hz must be positive, got {}",
                self.rotation_rate_hz
            ));
        }
        if !(self.range_noise_sigma_m >= 0.0 && self.range_noise_sigma_m.is_finite()) {
            problems.push(format!(
                "range_noise_sigma_m must be >= 0, got {}",
                self.range_noise_sigma_m
            ));
        }
        if !(0.0..=1.0).contains(&self.dropout_prob) {
            problems.push(format!("dropout_prob must be in [0, 1], got {}", self.dropout_prob));
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidSpec(problems))
        }
    }

    /// Elevation of each ring in degrees, lowest first.
    pub fn elevations_deg(&self) -> Vec<f64> {
        if let Some(table) = &self.beam_elevations_deg {
            return table.clone();
        }
        let [lo, hi] = self.vertical_fov_deg;
        let n = self.channels as usize;
        if n == 1 {
            return vec![0.5 * (lo + hi)];
        }
        (0..n).map(|r| lo + (hi - lo) * r as f64 / (n - 1) as f64).collect()
    }

    pub fn rays_per_scan(&self) -> usize {
        self.channels as usize * self.columns as usize
    }
}

/// Expanded ray table of a [`LidarSpec`], ring-major: ray `i` belongs to ring
/// `i / columns` and column `i % columns`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScanPattern {
    channels: usize,
    columns: usize,
    elevations_deg: Vec<f64>,
    directions: Vec<Vec3>,
}

impl ScanPattern {
    pub fn new(spec: &LidarSpec) -> Result<ScanPattern> {
        spec.validate()?;
        let channels = spec.channels as usize;
        let columns = spec.columns as usize;
        let elevations_deg = spec.elevations_deg();
        let mut directions = Vec::with_capacity(channels * columns);
        for elev in &elevations_deg {
            let (se, ce) = elev.to_radians().sin_cos();
            for c in 0..columns {
                let (sa, ca) = azimuth(c, columns).sin_cos();
                directions.push(Vec3::new(ce * ca, ce * sa, se));
            }
        }
        Ok(ScanPattern {
            channels,
            columns,
            elevations_deg,
            directions,
        })
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn columns(&self) -> usize {
        self.columns
    }

    pub fn len(&self) -> usize {
        self.directions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.directions.is_empty()
    }

    pub fn directions(&self) -> &[Vec3] {
        &self.directions
    }

    pub fn elevations_deg(&self) -> &[f64] {
        &self.elevations_deg
    }

    pub fn ring(&self, ray: usize) -> usize {
        ray / self.columns
    }

    pub fn column(&self, ray: usize) -> usize {
        ray % self.columns
    }

    /// Azimuth of a column in radians.
    pub fn azimuth(&self, column: usize) -> f64 {
        azimuth(column, self.columns)
    }
}

fn azimuth(column: usize, columns: usize) -> f64 {
    TAU * column as f64 / columns as f64
}

/// Points with a class label per point, plus optional ring and column ids.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LabeledPointCloud {
    pub points: Vec<Vec3>,
    pub labels: Vec<u16>,
    pub rings: Option<Vec<u16>>,
    pub columns: Option<Vec<u16>>,
    pub class_names: Vec<String>,
}

impl LabeledPointCloud {
    pub fn new(class_names: Vec<String>) -> Self {
        LabeledPointCloud {
            class_names,
            ..Default::default()
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.points.len();
        if self.labels.len() != n {
            return Err(Error::InvalidCloud(format!(
                "{} labels for {n} points",
                self.labels.len()
            )));
        }
        if self.rings.is_some() != self.columns.is_some() {
            return Err(Error::InvalidCloud("rings and columns must be present together".into()));
        }
        for (name, arr) in [("rings", &self.rings), ("columns", &self.columns)] {
            if let Some(a) = arr {
                if a.len() != n {
                    return Err(Error::InvalidCloud(format!("{} {name} for {n} points", a.len())));
                }
            }
        }
        if self.class_names.len() > u16::MAX as usize {
            return Err(Error::InvalidCloud("too many classes".into()));
        }
        if let Some(l) = self.labels.iter().find(|&&l| l as usize >= self.class_names.len()) {
            return Err(Error::InvalidCloud(format!(
                "label {l} out of range for {} classes",
                self.class_names.len()
            )));
        }
        Ok(())
    }

    /// Sub-cloud at `indices`, in the given order.
    pub fn select(&self, indices: &[usize]) -> LabeledPointCloud {
        LabeledPointCloud {
            points: indices.iter().map(|&i| self.points[i]).collect(),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            rings: self.rings.as_ref().map(|r| indices.iter().map(|&i| r[i]).collect()),
            columns: self.columns.as_ref().map(|c| indices.iter().map(|&i| c[i]).collect()),
            class_names: self.class_names.clone(),
        }
    }

    /// Applies `pose` to every point.
    pub fn transformed(&self, pose: &Pose) -> LabeledPointCloud {
        LabeledPointCloud {
            points: self.points.iter().map(|p| pose.transform_point(p)).collect(),
            ..self.clone()
        }
    }

    /// Point count per class.
    pub fn class_histogram(&self) -> Vec<u64> {
        let mut h = vec![0u64; self.class_names.len()];
        for &l in &self.labels {
            h[l as usize] += 1;
        }
        h
    }
}

/// A BVH plus the class id of every instance it was built from.
#[derive(Debug, Clone)]
pub struct LabeledScene {
    pub bvh: Bvh,
    pub instance_labels: Vec<u16>,
    pub class_names: Vec<String>,
}

impl LabeledScene {
    pub fn new(bvh: Bvh, instance_labels: Vec<u16>, class_names: Vec<String>) -> Result<Self> {
        let max_instance = bvh.primitives().iter().map(|t| t.instance_id).max().unwrap_or(0);
        if max_instance as usize >= instance_labels.len() {
            return Err(Error::InvalidGeometry(format!(
                "instance {max_instance} has no label ({} labels)",
                instance_labels.len()
            )));
        }
        if let Some(l) = instance_labels.iter().find(|&&l| l as usize >= class_names.len()) {
            return Err(Error::InvalidGeometry(format!("instance label {l} has no class name")));
        }
        Ok(LabeledScene {
            bvh,
            instance_labels,
            class_names,
        })
    }
}

/// Casts one revolution of `pattern` from `sensor_pose` into `scene`.
///
/// Points are returned in the sensor frame, in ray order, and carry their ring
/// and column. Rays without a hit inside `[range_min_m, range_max_m]` produce
/// no point.
pub fn simulate_scan(
    scene: &LabeledScene,
    sensor_pose: &Pose,
    pattern: &ScanPattern,
    spec: &LidarSpec,
    seed: u64,
) -> LabeledPointCloud {
    let noisy = spec.range_noise_sigma_m > 0.0 || spec.dropout_prob > 0.0;
    let returns: Vec<Option<(Vec3, u16)>> = pattern
        .directions()
        .par_iter()
        .enumerate()
        .map(|(i, dir)| {
            let ray = Ray {
                origin: sensor_pose.translation,
                direction: sensor_pose.transform_vector(dir),
                t_min: spec.range_min_m,
                t_max: spec.range_max_m,
            };
            let hit = scene.bvh.intersect(&ray)?;
            let mut range = hit.t;
            if noisy {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(i as u64);
                let keep: f64 = rng.random();
                if keep < spec.dropout_prob {
                    return None;
                }
                if spec.range_noise_sigma_m > 0.0 {
                    let z: f64 = rng.sample(StandardNormal);
                    range += spec.range_noise_sigma_m * z;
                    if !(range >= spec.range_min_m && range <= spec.range_max_m) {
                        return None;
                    }
                }
            }
            Some((dir * range, scene.instance_labels[hit.instance_id as usize]))
        })
        .collect();

    let count = returns.iter().filter(|r| r.is_some()).count();
    let mut cloud = LabeledPointCloud {
        points: Vec::with_capacity(count),
        labels: Vec::with_capacity(count),
        rings: Some(Vec::with_capacity(count)),
        columns: Some(Vec::with_capacity(count)),
        class_names: scene.class_names.clone(),
    };
    let rings = cloud.rings.as_mut().unwrap();
    let columns = cloud.columns.as_mut().unwrap();
    for (i, r) in returns.into_iter().enumerate() {
        if let Some((p, label)) = r {
            cloud.points.push(p);
            cloud.labels.push(label);
            rings.push(pattern.ring(i) as u16);
            columns.push(pattern.column(i) as u16);
        }
    }
    cloud
}
