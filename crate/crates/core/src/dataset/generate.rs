use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::compose::downsample;
use super::lpc::write_lpc;
use crate::error::{Error, Result};
use crate::hash::{derive_seed, fnv1a64, splitmix64};
use crate::lidar::{simulate_scan, LidarSpec, ScanPattern};
use crate::scene::{randomize_scene, Asset, GroundPlane, PlacementRules};

pub const MANIFEST_FILE: &str = "manifest.json";

/// Hex FNV-1a digest of a value's canonical JSON encoding.
pub fn config_digest<T: Serialize>(config: &T) -> String {
    let bytes = serde_json::to_vec(config).expect("config serializes");
    format!("{:016x}", fnv1a64(&bytes))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    /// File name relative to the manifest.
    pub path: PathBuf,
    pub point_count: u64,
    pub class_histogram: Vec<u64>,
    pub scene_seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub name: String,
    pub master_seed: u64,
    pub config_digest: String,
    pub class_names: Vec<String>,
    pub files: Vec<ManifestEntry>,
    pub class_histogram: Vec<u64>,
    /// 100 · class points / total points; all zero for an empty dataset.
    pub class_percentages: Vec<f64>,
}

impl DatasetManifest {
    /// Assembles a manifest, summing the per-file histograms.
    pub fn new(
        name: String,
        master_seed: u64,
        config_digest: String,
        class_names: Vec<String>,
        files: Vec<ManifestEntry>,
    ) -> DatasetManifest {
        let mut class_histogram = vec![0u64; class_names.len()];
        for f in &files {
            for (acc, c) in class_histogram.iter_mut().zip(&f.class_histogram) {
                *acc += c;
            }
        }
        let class_percentages = crate::metrics::percentages(&class_histogram);
        DatasetManifest {
            name,
            master_seed,
            config_digest,
            class_names,
            files,
            class_histogram,
            class_percentages,
        }
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self).expect("manifest serializes");
        text.push('\n');
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<DatasetManifest> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Json {
            path: path.to_path_buf(),
            source: e,
        })
    }
}

/// Everything that determines a generated dataset apart from its size, seed
/// and location.
#[derive(Debug, Clone)]
pub struct DatasetRecipe<'a> {
    pub name: String,
    pub library: &'a [Asset],
    pub rules: &'a PlacementRules,
    pub class_names: &'a [String],
    pub lidar: &'a LidarSpec,
    pub ground: Option<GroundPlane>,
    /// Optional per-cloud point cap, applied by uniform downsampling.
    pub max_points: Option<usize>,
    pub config_digest: String,
}

/// File name of cloud `index`.
pub fn cloud_file_name(index: u64) -> String {
    format!("{index:06}.lpc")
}

/// Generates `count` clouds into `out_dir` plus `manifest.json`.
///
/// Cloud `i` uses scene seed `splitmix64(master_seed ^ i)` for placement and
/// `splitmix64(scene_seed)` for sensor noise and downsampling, so the output
/// does not depend on `workers` or on scheduling.
pub fn generate_dataset(
    recipe: &DatasetRecipe<'_>,
    count: u64,
    master_seed: u64,
    out_dir: &Path,
    workers: usize,
) -> Result<DatasetManifest> {
    recipe.lidar.validate()?;
    recipe
        .rules
        .validate(recipe.library, recipe.class_names, recipe.lidar.range_max_m)?;
    let pattern = ScanPattern::new(recipe.lidar)?;
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::ThreadPool(e.to_string()))?;
    let results: Vec<Result<ManifestEntry>> = pool.install(|| {
        (0..count)
            .into_par_iter()
            .map(|index| generate_one(recipe, &pattern, master_seed, index, out_dir))
            .collect()
    });
    let files = results.into_iter().collect::<Result<Vec<_>>>()?;

    let manifest = DatasetManifest::new(
        recipe.name.clone(),
        master_seed,
        recipe.config_digest.clone(),
        recipe.class_names.to_vec(),
        files,
    );
    manifest.write(&out_dir.join(MANIFEST_FILE))?;
    Ok(manifest)
}

fn generate_one(
    recipe: &DatasetRecipe<'_>,
    pattern: &ScanPattern,
    master_seed: u64,
    index: u64,
    out_dir: &Path,
) -> Result<ManifestEntry> {
    let scene_seed = derive_seed(master_seed, index);
    let wrap = |e: Error| Error::Scene {
        index,
        source: Box::new(e),
    };
    let scene = randomize_scene(recipe.library, recipe.rules, recipe.class_names, scene_seed).map_err(wrap)?;
    let labeled = scene
        .to_labeled_scene(recipe.library, recipe.class_names, recipe.ground.as_ref())
        .map_err(wrap)?;
    let noise_seed = splitmix64(scene_seed);
    let mut cloud = simulate_scan(&labeled, &scene.sensor_pose, pattern, recipe.lidar, noise_seed);
    if let Some(k) = recipe.max_points {
        cloud = downsample(&cloud, k, noise_seed);
    }
    let name = cloud_file_name(index);
    write_lpc(&cloud, &out_dir.join(&name))?;
    Ok(ManifestEntry {
        path: PathBuf::from(name),
        point_count: cloud.len() as u64,
        class_histogram: cloud.class_histogram(),
        scene_seed,
    })
}
