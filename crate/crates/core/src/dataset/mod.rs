//! Point cloud files, dataset generation and dataset composition.

mod compose;
mod generate;
pub mod lpc;
mod ply;

pub use compose::{downsample, mix_datasets, split_dataset, MixEntry, MixPlan, MixSpec, Origin};
pub use generate::{
    cloud_file_name, config_digest, generate_dataset, DatasetManifest, DatasetRecipe, ManifestEntry, MANIFEST_FILE,
};
pub use lpc::{decode_lpc, encode_lpc, read_lpc, write_lpc};
pub use ply::{export_combined_ply, export_ply, Colormap};

use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

/// Sorted `.lpc` files directly inside `dir`.
pub fn list_clouds(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.extension().is_some_and(|e| e == "lpc") && path.is_file() {
            out.push(path);
        }
    }
    out.sort();
    Ok(out)
}
