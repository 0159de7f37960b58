//! The JSON run configuration.
//!
//! Relative paths inside a config file are resolved against the directory
//! that contains it.

use std::path::{Path, PathBuf};

use lidarforge::dataset::config_digest;
use lidarforge::lidar::LidarSpec;
use lidarforge::scene::{load_asset_library, Asset, GroundPlane, PlacementRules};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "default_name")]
    pub name: String,
    pub lidar: LidarSpec,
    pub scene: SceneConfig,
    pub output: OutputConfig,
    #[serde(default)]
    pub noise: Option<NoiseConfig>,
    #[serde(default)]
    pub downsample: Option<DownsampleConfig>,
    #[serde(default)]
    pub mix: Option<MixConfig>,
}

fn default_name() -> String {
    "dataset".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneConfig {
    /// Asset manifest: a JSON list of `{name, class, mesh, scale?, format?}`.
    pub assets: PathBuf,
    pub class_names: Vec<String>,
    pub rules: PlacementRules,
    #[serde(default)]
    pub ground: Option<GroundConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroundConfig {
    pub class: String,
    /// Defaults to the lidar's maximum range.
    #[serde(default)]
    pub half_extent_m: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
    #[serde(default)]
    pub count: u64,
    #[serde(default)]
    pub seed: u64,
}

/// Overrides the lidar's noise fields.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseConfig {
    #[serde(default)]
    pub range_noise_sigma_m: f64,
    #[serde(default)]
    pub dropout_prob: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DownsampleConfig {
    pub max_points: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MixConfig {
    #[serde(default = "default_total")]
    pub total: usize,
    #[serde(default = "default_fraction")]
    pub synthetic_fraction: f64,
    /// Directories of `.lpc` files.
    pub real: PathBuf,
    pub synthetic: PathBuf,
}

fn default_total() -> usize {
    10_000
}
fn default_fraction() -> f64 {
    0.5
}

/// The config-derived inputs of dataset generation.
pub struct Prepared {
    pub config: RunConfig,
    pub lidar: LidarSpec,
    pub library: Vec<Asset>,
    pub ground: Option<GroundPlane>,
    pub digest: String,
}

impl RunConfig {
    pub fn load(path: &Path) -> CliResult<RunConfig> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let mut config: RunConfig =
            serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        config.scene.assets = resolve(base, &config.scene.assets);
        config.output.dir = resolve(base, &config.output.dir);
        if let Some(m) = &mut config.mix {
            m.real = resolve(base, &m.real);
            m.synthetic = resolve(base, &m.synthetic);
        }
        Ok(config)
    }

    /// The lidar spec with the noise section applied.
    pub fn effective_lidar(&self) -> LidarSpec {
        let mut lidar = self.lidar.clone();
        if let Some(n) = self.noise {
            lidar.range_noise_sigma_m = n.range_noise_sigma_m;
            lidar.dropout_prob = n.dropout_prob;
        }
        lidar
    }

    /// Digest over the lidar (with noise applied) and scene sections.
    pub fn digest(&self) -> String {
        config_digest(&(&self.effective_lidar(), &self.scene))
    }

    /// Validates everything generation needs and loads the asset library.
    pub fn prepare(self) -> CliResult<Prepared> {
        let lidar = self.effective_lidar();
        lidar.validate()?;
        let names = &self.scene.class_names;
        if names.is_empty() {
            return Err(CliError::Config("scene.class_names is empty".into()));
        }
        for (i, n) in names.iter().enumerate() {
            if names[..i].contains(n) {
                return Err(CliError::Config(format!("duplicate class name {n:?}")));
            }
        }
        let ground = match &self.scene.ground {
            None => None,
            Some(g) => {
                let class_id = names
                    .iter()
                    .position(|n| *n == g.class)
                    .ok_or_else(|| CliError::Config(format!("ground class {:?} is not a class name", g.class)))?;
                let half_extent_m = g.half_extent_m.unwrap_or(lidar.range_max_m);
                if !(half_extent_m > 0.0) || !half_extent_m.is_finite() {
                    return Err(CliError::Config(format!(
                        "ground half_extent_m must be positive, got {half_extent_m}"
                    )));
                }
                Some(GroundPlane {
                    class_id: class_id as u16,
                    half_extent_m,
                })
            }
        };
        if let Some(d) = self.downsample {
            if d.max_points == 0 {
                return Err(CliError::Config("downsample.max_points must be positive".into()));
            }
        }
        let library = load_asset_library(&self.scene.assets, names).map_err(CliError::config)?;
        self.scene.rules.validate(&library, names, lidar.range_max_m)?;
        let digest = self.digest();
        Ok(Prepared {
            config: self,
            lidar,
            library,
            ground,
            digest,
        })
    }
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}
