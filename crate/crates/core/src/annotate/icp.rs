//! Point-to-point ICP with voxel downsampling.

use std::collections::BTreeMap;

use nalgebra::{Matrix3, Rotation3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::ground::{remove_ground, GroundParams, Plane};
use crate::error::{Error, Result};
use crate::geometry::{PointIndex, Pose, Vec3};

/// Minimum number of points after voxelization and of correspondences per
/// iteration.
pub const MIN_POINTS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IcpParams {
    /// Voxel edge for downsampling both clouds; 0 disables downsampling.
    pub voxel_m: f64,
    pub max_correspondence_m: f64,
    pub max_iterations: usize,
    /// Convergence threshold on the per-iteration update, rotation angle (rad)
    /// plus translation (m).
    pub epsilon: f64,
    /// Drop points on the dominant ground plane of each cloud before
    /// matching. A flat ground scanned by a spinning sensor forms rings that
    /// move with the sensor and pull point-to-point ICP towards zero motion.
    pub exclude_ground: bool,
    /// Second pass at a finer voxel size from the coarse result; `None`
    /// stops after the coarse pass.
    pub refinement: Option<Refinement>,
}

/// A fine ICP pass on the first point per voxel. Coarse voxel centroids of
/// two scans sample their surfaces differently, which leaves a bias of a few
/// centimetres; matching denser, real samples within a tighter gate removes
/// most of it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Refinement {
    /// Capped at the coarse voxel size.
    pub voxel_m: f64,
    pub max_correspondence_m: f64,
}

impl Default for Refinement {
    fn default() -> Self {
        Refinement {
            voxel_m: 0.2,
            max_correspondence_m: 0.3,
        }
    }
}

impl Default for IcpParams {
    fn default() -> Self {
        IcpParams {
            voxel_m: 0.5,
            max_correspondence_m: 1.0,
            max_iterations: 50,
            epsilon: 1e-6,
            exclude_ground: true,
            refinement: Some(Refinement::default()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IcpResult {
    /// Maps source coordinates into target coordinates.
    pub pose: Pose,
    /// RMS correspondence distance at `pose`.
    pub rmse: f64,
    pub iterations: usize,
    pub converged: bool,
    pub correspondences: usize,
}

type VoxelKey = [i64; 3];

/// Centroid of the points in each occupied voxel, ordered by voxel key.
pub fn voxel_downsample(points: &[Vec3], voxel: f64) -> Vec<Vec3> {
    if voxel <= 0.0 {
        return points.to_vec();
    }
    let mut cells: BTreeMap<VoxelKey, (Vec3, usize)> = BTreeMap::new();
    for p in points {
        let key = voxel_key(p, voxel);
        let e = cells.entry(key).or_insert((Vec3::zeros(), 0));
        e.0 += p;
        e.1 += 1;
    }
    cells.into_values().map(|(s, n)| s / n as f64).collect()
}

/// The first point in each voxel, in input order.
pub fn voxel_subsample(points: &[Vec3], voxel: f64) -> Vec<Vec3> {
    if voxel <= 0.0 {
        return points.to_vec();
    }
    let mut seen = std::collections::HashSet::new();
    points
        .iter()
        .filter(|p| seen.insert(voxel_key(p, voxel)))
        .copied()
        .collect()
}

pub(crate) fn voxel_key(p: &Vec3, voxel: f64) -> VoxelKey {
    [0, 1, 2].map(|i| (p[i] / voxel).floor() as i64)
}

/// Closed-form rigid transform minimizing `Σ ‖R·src_i + t − dst_i‖²`.
///
/// Uses the SVD of the cross-covariance; if the best orthogonal matrix is a
/// reflection, the axis of the smallest singular value is flipped.
pub fn solve_rigid(src: &[Vec3], dst: &[Vec3]) -> Result<Pose> {
    if src.len() != dst.len() || src.len() < 3 {
        return Err(Error::Registration(format!(
            "rigid solve needs >= 3 paired points, got {} and {}",
            src.len(),
            dst.len()
        )));
    }
    let n = src.len() as f64;
    let cs = src.iter().sum::<Vec3>() / n;
    let cd = dst.iter().sum::<Vec3>() / n;
    let mut h = Matrix3::zeros();
    for (s, d) in src.iter().zip(dst) {
        h += (s - cs) * (d - cd).transpose();
    }
    let svd = h.svd(true, true);
    let u = svd.u.ok_or_else(|| Error::Registration("SVD failed".into()))?;
    let v = svd
        .v_t
        .ok_or_else(|| Error::Registration("SVD failed".into()))?
        .transpose();
    let mut correction = Matrix3::identity();
    if (v * u.transpose()).determinant() < 0.0 {
        let smallest = svd
            .singular_values
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, _)| i)
            .unwrap_or(2);
        correction[(smallest, smallest)] = -1.0;
    }
    let rotation = v * correction * u.transpose();
    let translation = cd - rotation * cs;
    Ok(Pose { rotation, translation })
}

/// Points of a cloud that ICP matches on, with the ground plane removed
/// from them if any.
pub(crate) struct Matched {
    pub points: Vec<Vec3>,
    pub ground: Option<Plane>,
}

/// Splits off the RANSAC ground plane when `exclude_ground` is set; clouds
/// without a dominant plane are kept whole.
pub(crate) fn matched_points(points: &[Vec3], params: &IcpParams) -> Matched {
    if !params.exclude_ground {
        return Matched {
            points: points.to_vec(),
            ground: None,
        };
    }
    let ground = remove_ground(points, &GroundParams::default());
    match ground.plane {
        None => Matched {
            points: points.to_vec(),
            ground: None,
        },
        Some(plane) => Matched {
            points: points
                .iter()
                .zip(&ground.mask)
                .filter(|(_, g)| !**g)
                .map(|(p, _)| *p)
                .collect(),
            ground: Some(plane),
        },
    }
}

/// Tilts `pose` about the sensor origin and shifts it along the target
/// normal so the source ground plane lands on the target ground plane.
///
/// With the ground excluded, height, roll and pitch are constrained only by
/// the few upward-facing surfaces in view; the two planes pin them down
/// without touching the in-plane motion ICP recovered.
fn level(pose: &Pose, src: &Plane, tgt: &Plane) -> Pose {
    let n = pose.transform_vector(&src.normal);
    let tilt = Rotation3::rotation_between(&n, &tgt.normal).map_or_else(Matrix3::identity, |r| r.into_inner());
    let mut out = Pose {
        rotation: tilt * pose.rotation,
        translation: pose.translation,
    }
    .orthonormalized();
    let on_plane = out.transform_point(&(src.normal * src.offset));
    out.translation += tgt.normal * (tgt.offset - tgt.normal.dot(&on_plane));
    out
}

/// Nearest target point within `max_dist` for every source point.
fn correspond(source: &[Vec3], index: &PointIndex, max_dist: f64) -> Vec<Option<(usize, f64)>> {
    source
        .par_iter()
        .map(|p| index.nearest_neighbor(p, max_dist).map(|(i, d)| (i as usize, d)))
        .collect()
}

/// Aligns `source` to `target` starting from `initial`.
///
/// Both clouds are voxel-downsampled, then each iteration pairs every moved
/// source point with its nearest target point within the correspondence
/// distance and applies the closed-form rigid update. Iteration stops once the
/// update is below `epsilon` or after `max_iterations`; in the latter case
/// the result is returned with `converged == false`. The refinement pass, if
/// any, repeats this at its own voxel size and correspondence distance.
pub fn icp_align(source: &[Vec3], target: &[Vec3], initial: &Pose, params: &IcpParams) -> Result<IcpResult> {
    let src = matched_points(source, params);
    let tgt = matched_points(target, params);
    let coarse = Stage::new(
        voxel_downsample(&src.points, params.voxel_m),
        voxel_downsample(&tgt.points, params.voxel_m),
        params.max_correspondence_m,
    )?;
    let fine = params
        .refinement
        .map(|r| {
            let voxel = r.voxel_m.min(params.voxel_m);
            Stage::new(
                voxel_subsample(&src.points, voxel),
                voxel_subsample(&tgt.points, voxel),
                r.max_correspondence_m,
            )
        })
        .transpose()?;
    let planes = src.ground.zip(tgt.ground);
    align_stages(&coarse, fine.as_ref(), planes.as_ref(), initial, params)
}

/// One ICP pass: prepared source points against an indexed target.
pub(crate) struct Stage<'a> {
    src: Vec<Vec3>,
    tgt: std::borrow::Cow<'a, [Vec3]>,
    index: std::borrow::Cow<'a, PointIndex>,
    max_dist: f64,
}

impl<'a> Stage<'a> {
    pub(crate) fn new(src: Vec<Vec3>, tgt: Vec<Vec3>, max_dist: f64) -> Result<Stage<'static>> {
        check_distance(max_dist)?;
        let index = PointIndex::new(&tgt, max_dist);
        Ok(Stage {
            src,
            tgt: tgt.into(),
            index: std::borrow::Cow::Owned(index),
            max_dist,
        })
    }

    /// A pass against a target that is already indexed.
    pub(crate) fn borrowed(src: Vec<Vec3>, tgt: &'a [Vec3], index: &'a PointIndex, max_dist: f64) -> Result<Stage<'a>> {
        check_distance(max_dist)?;
        Ok(Stage {
            src,
            tgt: tgt.into(),
            index: std::borrow::Cow::Borrowed(index),
            max_dist,
        })
    }

    fn pairs(&self, pose: &Pose) -> (Vec<Vec3>, Vec<Vec3>, Vec<f64>) {
        let moved: Vec<Vec3> = self.src.iter().map(|p| pose.transform_point(p)).collect();
        let found = correspond(&moved, &self.index, self.max_dist);
        let mut a = Vec::with_capacity(found.len());
        let mut b = Vec::with_capacity(found.len());
        let mut d = Vec::with_capacity(found.len());
        for (c, p) in found.into_iter().zip(moved) {
            if let Some((j, dist)) = c {
                a.push(p);
                b.push(self.tgt[j]);
                d.push(dist);
            }
        }
        (a, b, d)
    }
}

fn check_distance(max_dist: f64) -> Result<()> {
    if max_dist > 0.0 && max_dist.is_finite() {
        Ok(())
    } else {
        Err(Error::Registration(format!(
            "correspondence distance must be positive, got {max_dist}"
        )))
    }
}

/// Runs the coarse pass, then the fine one from its result. Given the source
/// and target ground planes, each pass ends by levelling the pose on them.
pub(crate) fn align_stages(
    coarse: &Stage,
    fine: Option<&Stage>,
    planes: Option<&(Plane, Plane)>,
    initial: &Pose,
    params: &IcpParams,
) -> Result<IcpResult> {
    initial.validate()?;
    let mut pose = initial.orthonormalized();
    let mut iterations = 0;
    let mut converged = false;
    for stage in std::iter::once(coarse).chain(fine) {
        if stage.src.len() < MIN_POINTS || stage.tgt.len() < MIN_POINTS {
            return Err(Error::Registration(format!(
                "need >= {MIN_POINTS} points after voxelization, got {} source and {} target",
                stage.src.len(),
                stage.tgt.len()
            )));
        }
        converged = false;
        for _ in 0..params.max_iterations {
            let (a, b, _) = stage.pairs(&pose);
            if a.len() < MIN_POINTS {
                return Err(Error::TooFewCorrespondences {
                    iteration: iterations,
                    found: a.len(),
                });
            }
            let delta = solve_rigid(&a, &b)?;
            pose = delta.compose(&pose).orthonormalized();
            iterations += 1;
            if delta.rotation_angle() + delta.translation.norm() < params.epsilon {
                converged = true;
                break;
            }
        }
        if let Some((src, tgt)) = planes {
            pose = level(&pose, src, tgt);
        }
    }
    let last = fine.unwrap_or(coarse);
    let (_, _, dists) = last.pairs(&pose);
    let rmse = if dists.is_empty() {
        f64::INFINITY
    } else {
        (dists.iter().map(|d| d * d).sum::<f64>() / dists.len() as f64).sqrt()
    };
    Ok(IcpResult {
        pose,
        rmse,
        iterations,
        converged,
        correspondences: dists.len(),
    })
}
