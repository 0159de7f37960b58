//! Asset library and randomized scene placement.
//!
//! Each scene draws a sensor pose inside the placement area, then for every
//! class an instance count, and for every instance an asset and a pose. Poses
//! are drawn by rejection sampling until the instance is inside the area,
//! within sensor range, clear of the sensor and separated from every instance
//! already placed. Overlap is judged on horizontal footprint discs.

use std::collections::{BTreeMap, HashSet};
use std::f64::consts::{PI, TAU};
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::io::{load_mesh, MeshFormat};
use crate::geometry::{Bvh, Pose, TriangleMesh, Vec3};
use crate::lidar::LabeledScene;

/// A class-tagged mesh.
#[derive(Debug, Clone)]
pub struct Asset {
    pub name: String,
    pub class_id: u16,
    pub mesh: TriangleMesh,
    /// Largest horizontal distance of any vertex from the mesh centroid.
    pub footprint_radius_m: f64,
    centroid: Vec3,
}

impl Asset {
    pub fn new(name: impl Into<String>, class_id: u16, mesh: TriangleMesh) -> Asset {
        let centroid = mesh.centroid();
        let footprint_radius_m = mesh
            .vertices()
            .iter()
            .map(|v| (v.x - centroid.x).hypot(v.y - centroid.y))
            .fold(0.0, f64::max);
        Asset {
            name: name.into(),
            class_id,
            mesh,
            footprint_radius_m,
            centroid,
        }
    }

    /// Pose that puts the mesh centroid at `(x, y)`, rotated by `yaw` about
    /// it, with the lowest vertex resting on z = 0.
    pub fn placement_pose(&self, x: f64, y: f64, yaw: f64) -> Pose {
        let to_origin =
            Pose::from_translation(Vec3::new(-self.centroid.x, -self.centroid.y, -self.mesh.bounds().min.z));
        Pose::from_yaw(yaw, Vec3::new(x, y, 0.0)).compose(&to_origin)
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ManifestEntry {
    name: String,
    class: String,
    mesh: PathBuf,
    #[serde(default)]
    scale: Option<f64>,
    #[serde(default)]
    format: Option<MeshFormat>,
}

/// Loads the assets listed in a JSON manifest of
/// `{name, class, mesh, scale?, format?}` objects. Mesh paths are relative to
/// the manifest's directory; the format defaults to the file extension.
pub fn load_asset_library(manifest: &Path, class_names: &[String]) -> Result<Vec<Asset>> {
    let text = std::fs::read_to_string(manifest).map_err(|e| Error::io(manifest, e))?;
    let entries: Vec<ManifestEntry> = serde_json::from_str(&text).map_err(|e| Error::Json {
        path: manifest.to_path_buf(),
        source: e,
    })?;
    let base = manifest.parent().unwrap_or(Path::new("."));
    let mut seen = HashSet::new();
    let mut assets = Vec::with_capacity(entries.len());
    for entry in entries {
        if !seen.insert(entry.name.clone()) {
            return Err(Error::AssetLibrary(format!("duplicate asset name {:?}", entry.name)));
        }
        let class_id = class_names.iter().position(|c| *c == entry.class).ok_or_else(|| {
            Error::AssetLibrary(format!(
                "asset {:?} has unknown class {:?} (known: {})",
                entry.name,
                entry.class,
                class_names.join(", ")
            ))
        })? as u16;
        let path = base.join(&entry.mesh);
        let format = match entry.format {
            Some(f) => f,
            None => MeshFormat::from_path(&path)
                .ok_or_else(|| Error::AssetLibrary(format!("cannot infer mesh format of {}", path.display())))?,
        };
        let mut mesh = load_mesh(&path, format)?;
        if let Some(scale) = entry.scale {
            mesh = mesh.transform(&Pose::identity(), scale)?;
        }
        assets.push(Asset::new(entry.name, class_id, mesh));
    }
    Ok(assets)
}

/// Axis-aligned rectangle in the ground plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Area {
    pub min: [f64; 2],
    pub max: [f64; 2],
}

impl Area {
    pub fn contains(&self, x: f64, y: f64) -> bool {
        x >= self.min[0] && x <= self.max[0] && y >= self.min[1] && y <= self.max[1]
    }

    pub fn area(&self) -> f64 {
        (self.max[0] - self.min[0]) * (self.max[1] - self.min[1])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlacementRules {
    pub area: Area,
    #[serde(default = "default_separation")]
    pub min_separation_m: f64,
    #[serde(default = "default_sensor_range")]
    pub sensor_max_range_m: f64,
    #[serde(default = "default_sensor_height")]
    pub sensor_height_m: f64,
    #[serde(default = "default_attempts")]
    pub max_rejection_attempts: usize,
    /// Inclusive `[min, max]` instance count per class name. Classes not
    /// listed get no instances.
    #[serde(default)]
    pub counts: BTreeMap<String, [u32; 2]>,
}

fn default_separation() -> f64 {
    2.0
}
fn default_sensor_range() -> f64 {
    45.0
}
fn default_sensor_height() -> f64 {
    2.0
}
fn default_attempts() -> usize {
    1000
}

impl PlacementRules {
    /// Checks the rules against a library and the sensor's maximum range.
    pub fn validate(&self, library: &[Asset], class_names: &[String], lidar_range_max: f64) -> Result<()> {
        let mut problems = Vec::new();
        let a = &self.area;
        if !(a.min[0] < a.max[0] && a.min[1] < a.max[1]) || !a.min.iter().chain(&a.max).all(|v| v.is_finite()) {
            problems.push(format!("area min {:?} must be below max {:?}", a.min, a.max));
        }
        if !(self.min_separation_m >= 0.0 && self.min_separation_m.is_finite()) {
            problems.push(format!("min_separation_m must be >= 0, got {}", self.min_separation_m));
        }
        if !(self.sensor_max_range_m > 0.0 && self.sensor_max_range_m <= lidar_range_max) {
            problems.push(format!(
                "sensor_max_range_m must be in (0, {lidar_range_max}], got {}",
                self.sensor_max_range_m
            ));
        }
        if !self.sensor_height_m.is_finite() {
            problems.push("sensor_height_m must be finite".into());
        }
        if self.max_rejection_attempts == 0 {
            problems.push("max_rejection_attempts must be positive".into());
        }
        let mut worst_case_area = 0.0;
        for (class, [lo, hi]) in &self.counts {
            let Some(id) = class_names.iter().position(|c| c == class) else {
                problems.push(format!("counts names unknown class {class:?}"));
                continue;
            };
            if lo > hi {
                problems.push(format!("counts for {class:?}: min {lo} > max {hi}"));
            }
            let radius = library
                .iter()
                .filter(|a| a.class_id as usize == id)
                .map(|a| a.footprint_radius_m)
                .fold(None, |m: Option<f64>, r| Some(m.map_or(r, |m| m.max(r))));
            match radius {
                None if *hi > 0 => problems.push(format!("class {class:?} has counts but no assets")),
                None => {}
                Some(r) => {
                    let disc = r + 0.5 * self.min_separation_m;
                    worst_case_area += *hi as f64 * PI * disc * disc;
                }
            }
        }
        let usable = a.area().min(PI * self.sensor_max_range_m.powi(2));
        if worst_case_area > usable {
            problems.push(format!(
                "area too small: worst-case footprint {worst_case_area:.1} m² exceeds usable {usable:.1} m²"
            ));
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidRules(problems))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlacedInstance {
    pub asset: String,
    /// Index into the library the scene was drawn from.
    pub asset_index: usize,
    pub class_id: u16,
    /// Horizontal position of the mesh centroid.
    pub position: [f64; 2],
    pub yaw: f64,
    pub pose: Pose,
    pub footprint_radius_m: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneDescription {
    pub instances: Vec<PlacedInstance>,
    pub sensor_pose: Pose,
    pub seed: u64,
}

impl SceneDescription {
    pub fn sensor_xy(&self) -> [f64; 2] {
        [self.sensor_pose.translation.x, self.sensor_pose.translation.y]
    }

    /// Builds the ray-casting scene. Instance ids follow `self.instances`; a
    /// ground plane, when given, is appended as the last instance.
    pub fn to_labeled_scene(
        &self,
        library: &[Asset],
        class_names: &[String],
        ground: Option<&GroundPlane>,
    ) -> Result<LabeledScene> {
        let mut instances = Vec::with_capacity(self.instances.len() + 1);
        let mut labels = Vec::with_capacity(self.instances.len() + 1);
        for inst in &self.instances {
            instances.push((library[inst.asset_index].mesh.clone(), inst.pose));
            labels.push(inst.class_id);
        }
        if let Some(g) = ground {
            instances.push((g.mesh_around(self.sensor_xy()), Pose::identity()));
            labels.push(g.class_id);
        }
        let bvh = Bvh::build(&instances)?;
        LabeledScene::new(bvh, labels, class_names.to_vec())
    }
}

/// The z = 0 ground, modeled as a square of half-width `half_extent_m`
/// centred under the sensor. Making it at least as wide as the sensor range
/// makes it indistinguishable from an infinite plane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroundPlane {
    pub class_id: u16,
    pub half_extent_m: f64,
}

impl GroundPlane {
    pub fn mesh_around(&self, center: [f64; 2]) -> TriangleMesh {
        let h = self.half_extent_m;
        TriangleMesh::grid(
            (center[0] - h, center[1] - h),
            (center[0] + h, center[1] + h),
            0.0,
            1,
            1,
        )
    }
}

/// Draws a scene. Deterministic in `(library, rules, class_names, seed)`.
pub fn randomize_scene(
    library: &[Asset],
    rules: &PlacementRules,
    class_names: &[String],
    seed: u64,
) -> Result<SceneDescription> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let area = rules.area;
    let sx = rng.random_range(area.min[0]..=area.max[0]);
    let sy = rng.random_range(area.min[1]..=area.max[1]);
    let syaw = rng.random_range(0.0..TAU);
    let sensor_pose = Pose::from_yaw(syaw, Vec3::new(sx, sy, rules.sensor_height_m));

    let range = rules.sensor_max_range_m;
    let x_lo = area.min[0].max(sx - range);
    let x_hi = area.max[0].min(sx + range);
    let y_lo = area.min[1].max(sy - range);
    let y_hi = area.max[1].min(sy + range);

    let mut instances: Vec<PlacedInstance> = Vec::new();
    for (class_id, class) in class_names.iter().enumerate() {
        let Some(&[lo, hi]) = rules.counts.get(class) else {
            continue;
        };
        let candidates: Vec<usize> = library
            .iter()
            .enumerate()
            .filter(|(_, a)| a.class_id as usize == class_id)
            .map(|(i, _)| i)
            .collect();
        let count = rng.random_range(lo..=hi);
        if count > 0 && candidates.is_empty() {
            return Err(Error::InvalidRules(vec![format!("class {class:?} has no assets")]));
        }
        for k in 0..count as usize {
            let asset_index = candidates[rng.random_range(0..candidates.len())];
            let asset = &library[asset_index];
            let r = asset.footprint_radius_m;
            let mut placed = None;
            for _ in 0..rules.max_rejection_attempts {
                let x = rng.random_range(x_lo..=x_hi);
                let y = rng.random_range(y_lo..=y_hi);
                let yaw = rng.random_range(0.0..TAU);
                let to_sensor = (x - sx).hypot(y - sy);
                if to_sensor > range || to_sensor < r {
                    continue;
                }
                let clear = instances.iter().all(|o| {
                    (x - o.position[0]).hypot(y - o.position[1]) >= rules.min_separation_m + r + o.footprint_radius_m
                });
                if clear {
                    placed = Some((x, y, yaw));
                    break;
                }
            }
            let (x, y, yaw) = placed.ok_or_else(|| Error::PlacementFailed {
                class: class.clone(),
                instance: k,
                attempts: rules.max_rejection_attempts,
            })?;
            instances.push(PlacedInstance {
                asset: asset.name.clone(),
                asset_index,
                class_id: class_id as u16,
                position: [x, y],
                yaw,
                pose: asset.placement_pose(x, y, yaw),
                footprint_radius_m: r,
            });
        }
    }
    Ok(SceneDescription {
        instances,
        sensor_pose,
        seed,
    })
}
