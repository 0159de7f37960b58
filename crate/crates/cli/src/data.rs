use std::io::Write;
use std::path::{Path, PathBuf};

use lidarforge::annotate::Trajectory;
use lidarforge::dataset::{
    downsample as downsample_cloud, export_combined_ply, list_clouds, mix_datasets, read_lpc, split_dataset, write_lpc,
    Colormap, MixSpec,
};
use lidarforge::geometry::io::{load_mesh, write_ply_mesh, MeshFormat};
use lidarforge::geometry::{Aabb, Pose, Vec3};
use lidarforge::hash::derive_seed;
use lidarforge::metrics::{iou_report, ConfusionMatrix};
use rayon::prelude::*;
use serde_json::json;

use crate::config::RunConfig;
use crate::error::{CliError, CliResult};
use crate::output::{cloud_paths, file_name, guard_dir, guard_file, io, print_json, read_all, write_json};
use crate::{CropMeshArgs, DownsampleArgs, EvalArgs, ExportPlyArgs, MixArgs, SplitArgs};

pub fn mix(args: MixArgs, out: &mut dyn Write) -> CliResult<()> {
    let from_config = match &args.config {
        Some(path) => Some(
            RunConfig::load(path)?
                .mix
                .ok_or_else(|| CliError::Config(format!("{} has no mix section", path.display())))?,
        ),
        None => None,
    };
    let real = args
        .real
        .clone()
        .or_else(|| from_config.as_ref().map(|m| m.real.clone()))
        .ok_or_else(|| CliError::Config("--real or a config with a mix section is required".into()))?;
    let synthetic = args
        .synthetic
        .clone()
        .or_else(|| from_config.as_ref().map(|m| m.synthetic.clone()))
        .ok_or_else(|| CliError::Config("--synthetic or a config with a mix section is required".into()))?;
    let spec = MixSpec {
        total: args.total.or(from_config.as_ref().map(|m| m.total)).unwrap_or(10_000),
        synthetic_fraction: args
            .fraction
            .or(from_config.as_ref().map(|m| m.synthetic_fraction))
            .unwrap_or(0.5),
        real: list_clouds(&real)?,
        synthetic: list_clouds(&synthetic)?,
    };
    guard_file(&args.out, args.force)?;
    let plan = mix_datasets(&spec, args.seed)?;
    let expanded = plan.expanded();
    write_json(
        &args.out,
        &json!({
            "total": spec.total,
            "synthetic_fraction": spec.synthetic_fraction,
            "seed": args.seed,
            "entries": plan.entries,
            "files": expanded,
        }),
    )?;
    let synthetic_n = spec.synthetic_count();
    print_json(
        out,
        &json!({
            "status": "ok",
            "out": args.out,
            "total": expanded.len(),
            "synthetic": synthetic_n,
            "real": expanded.len() - synthetic_n,
            "distinct_real": spec.real.len(),
        }),
    )
}

pub fn split(args: SplitArgs, out: &mut dyn Write) -> CliResult<()> {
    let files = list_clouds(&args.input)?;
    if args.val > files.len() {
        return Err(CliError::Config(format!(
            "--val {} exceeds the {} clouds in {}",
            args.val,
            files.len(),
            args.input.display()
        )));
    }
    let (train, val) = split_dataset(&files, args.val, args.seed);
    std::fs::create_dir_all(&args.out).map_err(|e| io(&args.out, e))?;
    let train_path = args.out.join("train.txt");
    let val_path = args.out.join("val.txt");
    guard_file(&train_path, args.force)?;
    guard_file(&val_path, args.force)?;
    write_list(&train_path, &train)?;
    write_list(&val_path, &val)?;
    print_json(
        out,
        &json!({"status": "ok", "train": train.len(), "val": val.len(), "out": args.out}),
    )
}

fn write_list(path: &Path, files: &[PathBuf]) -> CliResult<()> {
    let text: String = files.iter().map(|f| format!("{}\n", f.display())).collect();
    std::fs::write(path, text).map_err(|e| io(path, e))
}

pub fn downsample(args: DownsampleArgs, out: &mut dyn Write) -> CliResult<()> {
    if args.points == 0 {
        return Err(CliError::Config("--points must be positive".into()));
    }
    let (inputs, outputs) = if args.input.is_dir() {
        let inputs = list_clouds(&args.input)?;
        guard_dir(&args.out, args.force, &[])?;
        let outputs = inputs.iter().map(|p| args.out.join(file_name(p))).collect();
        (inputs, outputs)
    } else {
        guard_file(&args.out, args.force)?;
        (vec![args.input.clone()], vec![args.out.clone()])
    };
    let counts = inputs
        .par_iter()
        .zip(&outputs)
        .enumerate()
        .map(|(i, (src, dst))| {
            let cloud = read_lpc(src)?;
            let reduced = downsample_cloud(&cloud, args.points, derive_seed(args.seed, i as u64));
            write_lpc(&reduced, dst)?;
            Ok((cloud.len(), reduced.len()))
        })
        .collect::<Result<Vec<_>, lidarforge::Error>>()?;
    print_json(
        out,
        &json!({
            "status": "ok",
            "files": counts.len(),
            "points_in": counts.iter().map(|c| c.0).sum::<usize>(),
            "points_out": counts.iter().map(|c| c.1).sum::<usize>(),
        }),
    )
}

/// Pairs ground-truth and prediction files: a single file with a single
/// file, or directory entries by file name.
fn pair(gt: &Path, pred: &Path) -> CliResult<Vec<(PathBuf, PathBuf)>> {
    match (gt.is_dir(), pred.is_dir()) {
        (false, false) => Ok(vec![(gt.to_path_buf(), pred.to_path_buf())]),
        (true, true) => {
            let gts = cloud_paths(gt)?;
            let preds = list_clouds(pred)?;
            if preds.len() != gts.len() {
                return Err(CliError::Runtime(format!(
                    "{} holds {} clouds but {} holds {}",
                    gt.display(),
                    gts.len(),
                    pred.display(),
                    preds.len()
                )));
            }
            gts.into_iter()
                .map(|g| {
                    let p = pred.join(file_name(&g));
                    if p.is_file() {
                        Ok((g, p))
                    } else {
                        Err(CliError::Runtime(format!(
                            "no prediction {} for {}",
                            p.display(),
                            g.display()
                        )))
                    }
                })
                .collect()
        }
        _ => Err(CliError::Config(
            "--gt and --pred must both be files or both be directories".into(),
        )),
    }
}

pub fn eval(args: EvalArgs, out: &mut dyn Write) -> CliResult<()> {
    let pairs = pair(&args.gt, &args.pred)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(crate::workers(args.workers))
        .build()
        .map_err(|e| CliError::Runtime(format!("thread pool: {e}")))?;
    let matrices = pool.install(|| {
        pairs
            .par_iter()
            .map(|(g, p)| -> CliResult<ConfusionMatrix> {
                let gt = read_lpc(g)?;
                let pred = read_lpc(p)?;
                if gt.class_names != pred.class_names {
                    return Err(CliError::Runtime(format!(
                        "{} and {} have different class tables",
                        g.display(),
                        p.display()
                    )));
                }
                if gt.len() != pred.len() {
                    return Err(CliError::Runtime(format!(
                        "{} has {} points but {} has {}",
                        g.display(),
                        gt.len(),
                        p.display(),
                        pred.len()
                    )));
                }
                let mut cm = ConfusionMatrix::new(gt.class_names.clone());
                cm.accumulate(&gt.labels, &pred.labels)?;
                Ok(cm)
            })
            .collect::<CliResult<Vec<_>>>()
    })?;
    let mut total = matrices[0].clone();
    for (cm, (g, _)) in matrices[1..].iter().zip(&pairs[1..]) {
        if cm.class_names != total.class_names {
            return Err(CliError::Runtime(format!(
                "{} has a different class table",
                g.display()
            )));
        }
        total.merge(cm)?;
    }
    let report = iou_report(&total);
    let per_class: serde_json::Map<String, serde_json::Value> = report
        .class_names
        .iter()
        .zip(&report.per_class_iou)
        .map(|(n, iou)| (n.clone(), json!(iou)))
        .collect();
    print_json(
        out,
        &json!({
            "class_names": report.class_names,
            "per_class_iou": per_class,
            "miou": report.miou,
            "undefined_classes": report.undefined_classes,
            "confusion": total.rows(),
            "files": pairs.len(),
            "points": total.total(),
        }),
    )
}

pub fn export_ply(args: ExportPlyArgs, out: &mut dyn Write) -> CliResult<()> {
    let inputs = cloud_paths(&args.input)?;
    let clouds = read_all(&inputs)?;
    let predictions = match &args.pred {
        None => None,
        Some(pred) => {
            let pairs = pair(&args.input, pred)?;
            let preds: Vec<PathBuf> = pairs.into_iter().map(|(_, p)| p).collect();
            Some(read_all(&preds)?.into_iter().map(|c| c.labels).collect::<Vec<_>>())
        }
    };
    let poses = match &args.trajectory {
        None => vec![Pose::identity(); clouds.len()],
        Some(path) => {
            let t = Trajectory::read(path)?;
            if t.poses.len() != clouds.len() {
                return Err(CliError::Runtime(format!(
                    "{} has {} poses for {} clouds",
                    path.display(),
                    t.poses.len(),
                    clouds.len()
                )));
            }
            t.poses
        }
    };
    guard_file(&args.out, args.force)?;
    let parts: Vec<_> = clouds
        .iter()
        .zip(poses)
        .enumerate()
        .map(|(i, (c, pose))| (c, pose, predictions.as_ref().map(|p| &p[i][..])))
        .collect();
    export_combined_ply(&parts, &Colormap::default(), &args.out)?;
    print_json(
        out,
        &json!({
            "status": "ok",
            "out": args.out,
            "clouds": clouds.len(),
            "points": clouds.iter().map(|c| c.len()).sum::<usize>(),
        }),
    )
}

pub fn crop_mesh(args: CropMeshArgs, out: &mut dyn Write) -> CliResult<()> {
    let format = match &args.format {
        Some(f) => f.parse::<MeshFormat>().map_err(CliError::Config)?,
        None => MeshFormat::from_path(&args.input).ok_or_else(|| {
            CliError::Config(format!(
                "cannot tell the format of {}; pass --format",
                args.input.display()
            ))
        })?,
    };
    let corner = |v: &[f64], flag: &str| -> CliResult<Vec3> {
        match v {
            [x, y, z] if v.iter().all(|c| c.is_finite()) => Ok(Vec3::new(*x, *y, *z)),
            _ => Err(CliError::Config(format!("--{flag} needs three finite numbers x,y,z"))),
        }
    };
    let min = corner(&args.min, "min")?;
    let max = corner(&args.max, "max")?;
    if (0..3).any(|i| min[i] > max[i]) {
        return Err(CliError::Config("--min must not exceed --max on any axis".into()));
    }
    let mesh = load_mesh(&args.input, format)?;
    let cropped = mesh.crop(&Aabb::new(min, max));
    guard_file(&args.out, args.force)?;
    write_ply_mesh(&cropped, &args.out)?;
    print_json(
        out,
        &json!({
            "status": "ok",
            "out": args.out,
            "triangles_in": mesh.triangles().len(),
            "triangles_out": cropped.triangles().len(),
        }),
    )
}
