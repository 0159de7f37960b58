use std::io::Write;

use lidarforge::dataset::{generate_dataset, DatasetRecipe};

use crate::config::RunConfig;
use crate::error::CliResult;
use crate::output::{guard_dir, print_json};
use crate::GenerateArgs;

pub fn run(args: GenerateArgs, out: &mut dyn Write) -> CliResult<()> {
    let prepared = RunConfig::load(&args.config)?.prepare()?;
    let cfg = &prepared.config;
    let count = args.count.unwrap_or(cfg.output.count);
    let seed = args.seed.unwrap_or(cfg.output.seed);
    let dir = args.out.clone().unwrap_or_else(|| cfg.output.dir.clone());
    guard_dir(&dir, args.force, &[])?;

    let recipe = DatasetRecipe {
        name: cfg.name.clone(),
        library: &prepared.library,
        rules: &cfg.scene.rules,
        class_names: &cfg.scene.class_names,
        lidar: &prepared.lidar,
        ground: prepared.ground,
        max_points: cfg.downsample.map(|d| d.max_points),
        config_digest: prepared.digest.clone(),
    };
    let manifest = generate_dataset(&recipe, count, seed, &dir, crate::workers(args.workers))?;
    let points: u64 = manifest.files.iter().map(|f| f.point_count).sum();
    let percentages: serde_json::Map<String, serde_json::Value> = manifest
        .class_names
        .iter()
        .zip(&manifest.class_percentages)
        .map(|(n, p)| (n.clone(), serde_json::json!(lidarforge::metrics::round_tenth(*p))))
        .collect();
    print_json(
        out,
        &serde_json::json!({
            "status": "ok",
            "dir": dir,
            "files": manifest.files.len(),
            "points": points,
            "config_digest": manifest.config_digest,
            "class_percentages": percentages,
        }),
    )
}
