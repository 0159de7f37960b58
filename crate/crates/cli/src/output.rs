//! Output-path guards and small I/O helpers shared by the commands.

use std::io::Write;
use std::path::{Path, PathBuf};

use lidarforge::dataset::{list_clouds, read_lpc, MANIFEST_FILE};
use lidarforge::lidar::LabeledPointCloud;

use crate::error::{CliError, CliResult};

/// Refuses to replace an existing file unless `force`.
pub fn guard_file(path: &Path, force: bool) -> CliResult<()> {
    if path.exists() && !force {
        return Err(CliError::Runtime(format!(
            "{} exists; pass --force to overwrite",
            path.display()
        )));
    }
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| io(parent, e))?;
    }
    Ok(())
}

/// Prepares an output directory. Existing clouds, a manifest or any of
/// `names` in it are refused unless `force`, in which case they are removed
/// so the directory ends up holding exactly the new outputs.
pub fn guard_dir(dir: &Path, force: bool, names: &[&str]) -> CliResult<()> {
    if dir.exists() {
        let mut existing = if dir.is_dir() {
            list_clouds(dir)?
        } else {
            return Err(CliError::Runtime(format!("{} is not a directory", dir.display())));
        };
        for name in names.iter().chain(&[MANIFEST_FILE]) {
            let p = dir.join(name);
            if p.exists() {
                existing.push(p);
            }
        }
        if !existing.is_empty() {
            if !force {
                return Err(CliError::Runtime(format!(
                    "{} already holds outputs ({} files); pass --force to overwrite",
                    dir.display(),
                    existing.len()
                )));
            }
            for p in existing {
                std::fs::remove_file(&p).map_err(|e| io(&p, e))?;
            }
        }
    }
    std::fs::create_dir_all(dir).map_err(|e| io(dir, e))
}

pub fn io(path: &Path, e: std::io::Error) -> CliError {
    CliError::Runtime(format!("{}: {e}", path.display()))
}

/// Clouds at `path`: the file itself, or every `.lpc` in the directory.
pub fn cloud_paths(path: &Path) -> CliResult<Vec<PathBuf>> {
    if path.is_dir() {
        let files = list_clouds(path)?;
        if files.is_empty() {
            return Err(CliError::Runtime(format!("{} holds no .lpc files", path.display())));
        }
        Ok(files)
    } else {
        Ok(vec![path.to_path_buf()])
    }
}

pub fn read_all(paths: &[PathBuf]) -> CliResult<Vec<LabeledPointCloud>> {
    paths.iter().map(|p| read_lpc(p).map_err(CliError::from)).collect()
}

pub fn print_json(out: &mut dyn Write, value: &serde_json::Value) -> CliResult<()> {
    writeln!(
        out,
        "{}",
        serde_json::to_string_pretty(value).expect("json value serializes")
    )
    .map_err(|e| CliError::Runtime(format!("stdout: {e}")))
}

pub fn write_json(path: &Path, value: &impl serde::Serialize) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value).expect("value serializes");
    text.push('\n');
    std::fs::write(path, text).map_err(|e| io(path, e))
}

pub fn file_name(path: &Path) -> String {
    path.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default()
}
