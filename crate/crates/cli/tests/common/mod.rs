//! Helpers for driving the CLI in-process and laying out config fixtures.
#![allow(dead_code)]

use std::path::{Path, PathBuf};

use lidarforge::dataset::write_lpc;
use lidarforge::geometry::io::write_ply_mesh;
use lidarforge::lidar::{LabeledPointCloud, LidarSpec};
use serde_json::json;

use crate::support::*;

pub struct Outcome {
    pub code: i32,
    pub stdout: String,
    pub stderr: String,
}

impl Outcome {
    pub fn json(&self) -> serde_json::Value {
        serde_json::from_str(&self.stdout).unwrap_or_else(|e| panic!("stdout is not JSON ({e}): {}", self.stdout))
    }

    pub fn error(&self) -> serde_json::Value {
        let line = self.stderr.trim();
        assert_eq!(line.lines().count(), 1, "stderr: {}", self.stderr);
        serde_json::from_str(line).unwrap()
    }

    #[track_caller]
    pub fn ok(self) -> Outcome {
        assert_eq!(self.code, 0, "stderr: {}", self.stderr);
        self
    }
}

pub fn run<S: AsRef<str>>(args: &[S]) -> Outcome {
    let argv: Vec<String> = std::iter::once("lidarforge".to_string())
        .chain(args.iter().map(|a| a.as_ref().to_string()))
        .collect();
    let (mut out, mut err) = (Vec::new(), Vec::new());
    let code = lidarforge_cli::execute(argv, &mut out, &mut err);
    Outcome {
        code,
        stdout: String::from_utf8(out).unwrap(),
        stderr: String::from_utf8(err).unwrap(),
    }
}

pub fn p(path: &Path) -> String {
    path.to_str().unwrap().to_string()
}

/// Writes the farm meshes, an asset manifest and a run config under `dir`;
/// returns the config path.
pub fn farm_config(dir: &Path, lidar: &LidarSpec) -> PathBuf {
    let assets = dir.join("assets");
    std::fs::create_dir_all(&assets).unwrap();
    let names = ["tractor_small", "tractor_large", "combine", "bales", "shed"];
    let entries: Vec<_> = farm_library()
        .iter()
        .zip(names)
        .map(|(a, name)| {
            write_ply_mesh(&a.mesh, &assets.join(format!("{name}.ply"))).unwrap();
            json!({
                "name": name,
                "class": class_names()[a.class_id as usize],
                "mesh": format!("{name}.ply"),
            })
        })
        .collect();
    std::fs::write(
        assets.join("assets.json"),
        serde_json::to_string_pretty(&entries).unwrap(),
    )
    .unwrap();
    let config = json!({
        "name": "farm",
        "lidar": lidar,
        "scene": {
            "assets": "assets/assets.json",
            "class_names": class_names(),
            "rules": farm_rules(),
            "ground": {"class": "other"},
        },
        "output": {"dir": "out", "count": 3, "seed": 1},
    });
    let path = dir.join("config.json");
    std::fs::write(&path, serde_json::to_string_pretty(&config).unwrap()).unwrap();
    path
}

pub fn write_frames(dir: &Path, frames: &[LabeledPointCloud]) -> Vec<PathBuf> {
    std::fs::create_dir_all(dir).unwrap();
    frames
        .iter()
        .enumerate()
        .map(|(i, f)| {
            let path = dir.join(format!("{i:04}.lpc"));
            write_lpc(f, &path).unwrap();
            path
        })
        .collect()
}

/// Every file under `dir` with its bytes, sorted by relative path.
pub fn tree(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.is_file())
        .map(|p| (p.strip_prefix(dir).unwrap().to_path_buf(), std::fs::read(&p).unwrap()))
        .collect();
    out.sort();
    out
}
