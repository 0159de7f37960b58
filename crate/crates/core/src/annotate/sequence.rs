//! Frame-to-frame registration of a scan sequence and label propagation.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;

use super::cluster::ClusterSet;
use super::icp::{align_stages, matched_points, voxel_downsample, voxel_key, voxel_subsample, IcpParams, Stage};
use crate::error::{Error, Result};
use crate::geometry::{PointIndex, Pose, Vec3};
use crate::lidar::LabeledPointCloud;

/// Poses mapping each frame into the coordinates of frame 0.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Trajectory {
    pub poses: Vec<Pose>,
}

#[derive(Debug, Clone)]
pub struct Registration {
    pub trajectory: Trajectory,
    /// All frames in frame-0 coordinates, keeping the first point per voxel.
    pub map: LabeledPointCloud,
    /// Final ICP residual per frame (`rmse[i]` aligns frame `i + 1`).
    pub rmse: Vec<f64>,
}

/// Registers a sequence frame by frame against a growing map.
///
/// Each frame loses its ground plane and is aligned with ICP to a map of all
/// earlier frames in frame-0 coordinates, starting from the previous pose
/// advanced by the previous relative motion (constant velocity). The ICP
/// target keeps the first non-ground point per cell of the refinement voxel
/// size, and every pose is levelled on frame 0's ground plane. The returned
/// map keeps the first point per voxel of all frames.
pub fn register_sequence(frames: &[LabeledPointCloud], params: &IcpParams) -> Result<Registration> {
    if frames.len() < 2 {
        return Err(Error::Registration(format!("need >= 2 frames, got {}", frames.len())));
    }
    if let Some(i) = frames.iter().position(|f| f.is_empty()) {
        return Err(Error::Registration(format!("frame {i} is empty")));
    }
    let map_voxel = params
        .refinement
        .map_or(params.voxel_m, |r| r.voxel_m.min(params.voxel_m));
    let mut target: Vec<Vec3> = Vec::new();
    let mut occupied = HashSet::new();
    let mut add = |pts: &[Vec3], pose: &Pose, target: &mut Vec<Vec3>| {
        for p in pts {
            let q = pose.transform_point(p);
            if map_voxel <= 0.0 || occupied.insert(voxel_key(&q, map_voxel)) {
                target.push(q);
            }
        }
    };
    let first = matched_points(&frames[0].points, params);
    add(&first.points, &Pose::identity(), &mut target);

    let mut poses = vec![Pose::identity()];
    let mut rmse = Vec::new();
    let mut velocity = Pose::identity();
    for (i, frame) in frames.iter().enumerate().skip(1) {
        let matched = matched_points(&frame.points, params);
        let planes = matched.ground.zip(first.ground);
        let guess = poses[i - 1].compose(&velocity).orthonormalized();
        let r = {
            let index = PointIndex::new(&target, params.max_correspondence_m);
            let coarse = Stage::borrowed(
                voxel_downsample(&matched.points, params.voxel_m),
                &target,
                &index,
                params.max_correspondence_m,
            );
            let fine = params
                .refinement
                .map(|r| {
                    let voxel = r.voxel_m.min(params.voxel_m);
                    Stage::borrowed(
                        voxel_subsample(&matched.points, voxel),
                        &target,
                        &index,
                        r.max_correspondence_m,
                    )
                })
                .transpose();
            coarse
                .and_then(|c| fine.and_then(|f| align_stages(&c, f.as_ref(), planes.as_ref(), &guess, params)))
                .map_err(|e| Error::FrameRegistration {
                    frame: i,
                    source: Box::new(e),
                })?
        };
        velocity = poses[i - 1].inverse().compose(&r.pose);
        rmse.push(r.rmse);
        add(&matched.points, &r.pose, &mut target);
        poses.push(r.pose);
    }
    let trajectory = Trajectory { poses };
    let map = build_map(frames, &trajectory, params.voxel_m)?;
    Ok(Registration { trajectory, map, rmse })
}

/// Merges frames into one cloud, keeping the first point that lands in each
/// voxel (frames in order, points in order). `voxel <= 0` keeps everything.
pub fn build_map(frames: &[LabeledPointCloud], trajectory: &Trajectory, voxel: f64) -> Result<LabeledPointCloud> {
    if frames.len() != trajectory.poses.len() {
        return Err(Error::Registration(format!(
            "{} frames but {} poses",
            frames.len(),
            trajectory.poses.len()
        )));
    }
    let class_names = frames.first().map(|f| f.class_names.clone()).unwrap_or_default();
    let mut map = LabeledPointCloud::new(class_names);
    let mut occupied = HashSet::new();
    for (frame, pose) in frames.iter().zip(&trajectory.poses) {
        if frame.class_names != map.class_names {
            return Err(Error::Labels("frames use different class tables".into()));
        }
        for (p, &l) in frame.points.iter().zip(&frame.labels) {
            let q = pose.transform_point(p);
            if voxel <= 0.0 || occupied.insert(voxel_key(&q, voxel)) {
                map.points.push(q);
                map.labels.push(l);
            }
        }
    }
    Ok(map)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PropagationParams {
    pub radius_m: f64,
    /// Label for points with no clustered neighbour or whose cluster was not
    /// assigned.
    pub other_class: u16,
}

impl Default for PropagationParams {
    fn default() -> Self {
        PropagationParams {
            radius_m: 0.3,
            other_class: 0,
        }
    }
}

/// Labels every frame point by its nearest clustered map point.
///
/// A point takes the class of the cluster owning its nearest clustered map
/// point within `radius_m`; otherwise it becomes `other_class`.
pub fn propagate_labels(
    frames: &[LabeledPointCloud],
    trajectory: &Trajectory,
    clusters: &ClusterSet,
    class_names: &[String],
    params: &PropagationParams,
) -> Result<Vec<LabeledPointCloud>> {
    if frames.len() != trajectory.poses.len() {
        return Err(Error::Registration(format!(
            "{} frames but {} poses",
            frames.len(),
            trajectory.poses.len()
        )));
    }
    if params.other_class as usize >= class_names.len() {
        return Err(Error::Labels(format!(
            "other class {} out of range",
            params.other_class
        )));
    }
    if let Some(c) = clusters
        .clusters
        .iter()
        .filter_map(|c| c.class)
        .find(|&c| c as usize >= class_names.len())
    {
        return Err(Error::Labels(format!("cluster class {c} out of range")));
    }
    let (pts, owner): (Vec<Vec3>, Vec<u32>) = clusters
        .points
        .iter()
        .zip(&clusters.assignment)
        .filter_map(|(p, a)| a.map(|a| (*p, a)))
        .unzip();
    let index = PointIndex::new(&pts, params.radius_m.max(1e-6));
    Ok(frames
        .iter()
        .zip(&trajectory.poses)
        .map(|(frame, pose)| {
            let labels = frame
                .points
                .par_iter()
                .map(|p| {
                    index
                        .nearest_neighbor(&pose.transform_point(p), params.radius_m)
                        .and_then(|(i, _)| clusters.clusters[owner[i as usize] as usize].class)
                        .unwrap_or(params.other_class)
                })
                .collect();
            LabeledPointCloud {
                points: frame.points.clone(),
                labels,
                rings: frame.rings.clone(),
                columns: frame.columns.clone(),
                class_names: class_names.to_vec(),
            }
        })
        .collect())
}

impl Trajectory {
    /// One `frame tx ty tz qx qy qz qw` line per pose.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (i, p) in self.poses.iter().enumerate() {
            let t = p.translation;
            let [qx, qy, qz, qw] = p.quaternion();
            writeln!(s, "{i} {} {} {} {qx} {qy} {qz} {qw}", t.x, t.y, t.z).unwrap();
        }
        s
    }

    pub fn parse(text: &str, path: &Path) -> Result<Trajectory> {
        let mut poses = Vec::new();
        for (no, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |message: String| Error::TextFormat {
                path: path.to_path_buf(),
                line: no + 1,
                message,
            };
            let f: Vec<&str> = line.split_whitespace().collect();
            if f.len() != 8 {
                return Err(err(format!("expected 8 fields, got {}", f.len())));
            }
            let frame: usize = f[0].parse().map_err(|_| err(format!("bad frame index {:?}", f[0])))?;
            if frame != poses.len() {
                return Err(err(format!("expected frame {}, got {frame}", poses.len())));
            }
            let v = f[1..]
                .iter()
                .map(|s| s.parse::<f64>().map_err(|_| err(format!("bad number {s:?}"))))
                .collect::<Result<Vec<f64>>>()?;
            let pose = Pose::from_quaternion([v[3], v[4], v[5], v[6]], Vec3::new(v[0], v[1], v[2]))
                .map_err(|e| err(e.to_string()))?;
            poses.push(pose);
        }
        Ok(Trajectory { poses })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Trajectory> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Trajectory::parse(&text, path)
    }
}
