use std::io::Write;
use std::path::Path;

use lidarforge::annotate::{
    build_map, euclidean_cluster, propagate_labels, read_assignments, register_sequence, remove_ground, ClusterSet,
    GroundMethod, GroundParams, IcpParams, PropagationParams, Refinement, Trajectory,
};
use lidarforge::dataset::{list_clouds, read_lpc, write_lpc};
use serde_json::json;

use crate::error::{CliError, CliResult};
use crate::output::{file_name, guard_dir, guard_file, print_json, read_all};
use crate::{ClusterArgs, GroundMethodArg, PropagateArgs, RegisterArgs};

pub const TRAJECTORY_FILE: &str = "trajectory.txt";
pub const MAP_FILE: &str = "map.lpc";

fn frames_in(dir: &Path) -> CliResult<Vec<std::path::PathBuf>> {
    let files = list_clouds(dir)?;
    if files.is_empty() {
        return Err(CliError::Runtime(format!("{} holds no .lpc frames", dir.display())));
    }
    Ok(files)
}

fn positive(v: f64, flag: &str) -> CliResult<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(CliError::Config(format!("--{flag} must be positive, got {v}")))
    }
}

pub fn register(args: RegisterArgs, out: &mut dyn Write) -> CliResult<()> {
    if !(args.voxel >= 0.0 && args.voxel.is_finite()) {
        return Err(CliError::Config(format!(
            "--voxel must be non-negative, got {}",
            args.voxel
        )));
    }
    positive(args.max_corr, "max-corr")?;
    positive(args.epsilon, "epsilon")?;
    if args.max_iters == 0 {
        return Err(CliError::Config("--max-iters must be positive".into()));
    }
    let refinement = if args.no_refine {
        None
    } else {
        if !(args.refine_voxel >= 0.0 && args.refine_voxel.is_finite()) {
            return Err(CliError::Config(format!(
                "--refine-voxel must be non-negative, got {}",
                args.refine_voxel
            )));
        }
        positive(args.refine_corr, "refine-corr")?;
        Some(Refinement {
            voxel_m: args.refine_voxel,
            max_correspondence_m: args.refine_corr,
        })
    };
    let map_voxel = args.map_voxel.unwrap_or(args.voxel);
    if !(map_voxel >= 0.0 && map_voxel.is_finite()) {
        return Err(CliError::Config(format!(
            "--map-voxel must be non-negative, got {map_voxel}"
        )));
    }
    let files = frames_in(&args.input)?;
    let frames = read_all(&files)?;
    guard_dir(&args.out, args.force, &[TRAJECTORY_FILE, MAP_FILE])?;

    let params = IcpParams {
        voxel_m: args.voxel,
        max_correspondence_m: args.max_corr,
        max_iterations: args.max_iters,
        epsilon: args.epsilon,
        exclude_ground: !args.keep_ground,
        refinement,
    };
    let reg = register_sequence(&frames, &params)?;
    let map = if map_voxel == args.voxel {
        reg.map
    } else {
        build_map(&frames, &reg.trajectory, map_voxel)?
    };
    reg.trajectory.write(&args.out.join(TRAJECTORY_FILE))?;
    write_lpc(&map, &args.out.join(MAP_FILE))?;
    let worst = reg.rmse.iter().copied().fold(0.0f64, f64::max);
    print_json(
        out,
        &json!({
            "status": "ok",
            "frames": frames.len(),
            "map_points": map.len(),
            "max_rmse_m": worst,
            "rmse_m": reg.rmse,
            "out": args.out,
        }),
    )
}

pub fn cluster(args: ClusterArgs, out: &mut dyn Write) -> CliResult<()> {
    positive(args.distance, "distance")?;
    if !args.z_threshold.is_finite() {
        return Err(CliError::Config("--z-threshold must be finite".into()));
    }
    let map = read_lpc(&args.map)?;
    let ground = remove_ground(
        &map.points,
        &GroundParams {
            method: match args.ground {
                GroundMethodArg::Ransac => GroundMethod::Ransac,
                GroundMethodArg::ZThreshold => GroundMethod::ZThreshold,
            },
            iterations: args.ransac_iters,
            inlier_distance_m: args.inlier_dist,
            z_threshold_m: args.z_threshold,
            seed: args.seed,
            ..GroundParams::default()
        },
    );
    let above: Vec<_> = map
        .points
        .iter()
        .zip(&ground.mask)
        .filter(|(_, &g)| !g)
        .map(|(p, _)| *p)
        .collect();
    let set = euclidean_cluster(&above, args.distance, args.min_size.max(1));
    guard_file(&args.out, args.force)?;
    set.write(&args.out)?;

    let mut table = format!(
        "{:>5}  {:>28}  {:>22}  {:>8}\n",
        "id", "centroid (m)", "extent (m)", "points"
    );
    for (id, c) in set.clusters.iter().enumerate() {
        let e = c.max - c.min;
        table.push_str(&format!(
            "{id:>5}  {:>8.2} {:>8.2} {:>8.2}   {:>6.2} {:>6.2} {:>6.2}  {:>8}\n",
            c.centroid.x, c.centroid.y, c.centroid.z, e.x, e.y, e.z, c.point_count
        ));
    }
    table.push_str(&format!(
        "{} clusters; {} of {} map points on the ground, {} unclustered\n",
        set.clusters.len(),
        ground.ground_count(),
        map.len(),
        set.assignment.iter().filter(|a| a.is_none()).count()
    ));
    out.write_all(table.as_bytes())
        .map_err(|e| CliError::Runtime(format!("stdout: {e}")))
}

pub fn propagate(args: PropagateArgs, out: &mut dyn Write) -> CliResult<()> {
    positive(args.radius, "radius")?;
    let files = frames_in(&args.frames)?;
    let frames = read_all(&files)?;
    let class_names = match &args.classes {
        Some(c) => c.iter().map(|s| s.trim().to_string()).collect::<Vec<_>>(),
        None => frames[0].class_names.clone(),
    };
    if class_names.is_empty() || class_names.iter().any(|c| c.is_empty()) {
        return Err(CliError::Config("--classes must list non-empty class names".into()));
    }
    let other_class = class_names
        .iter()
        .position(|c| *c == args.other)
        .ok_or_else(|| CliError::Config(format!("--other {:?} is not in the class table", args.other)))?;
    let trajectory = Trajectory::read(&args.trajectory)?;
    let mut clusters = ClusterSet::read(&args.clusters)?;
    let assignments = read_assignments(&args.assignments, &class_names)?;
    clusters.assign(&assignments)?;
    guard_dir(&args.out, args.force, &[])?;
    let labeled = propagate_labels(
        &frames,
        &trajectory,
        &clusters,
        &class_names,
        &PropagationParams {
            radius_m: args.radius,
            other_class: other_class as u16,
        },
    )?;
    let mut histogram = vec![0u64; class_names.len()];
    for (cloud, src) in labeled.iter().zip(&files) {
        write_lpc(cloud, &args.out.join(file_name(src)))?;
        for (acc, c) in histogram.iter_mut().zip(cloud.class_histogram()) {
            *acc += c;
        }
    }
    let counts: serde_json::Map<String, serde_json::Value> = class_names
        .iter()
        .zip(&histogram)
        .map(|(n, c)| (n.clone(), json!(c)))
        .collect();
    print_json(
        out,
        &json!({
            "status": "ok",
            "frames": labeled.len(),
            "assigned_clusters": assignments.len(),
            "class_points": counts,
            "out": args.out,
        }),
    )
}
