//! Semi-automatic annotation of real scan sequences.
//!
//! Frames are registered into a common map with ICP, the ground is removed,
//! the remaining points are clustered, a human assigns classes to clusters,
//! and the labels are propagated back to every frame.

mod cluster;
mod ground;
mod icp;
mod sequence;

pub use cluster::{euclidean_cluster, parse_assignments, read_assignments, Cluster, ClusterSet};
pub use ground::{remove_ground, GroundMethod, GroundParams, GroundResult, Plane};
pub use icp::{
    icp_align, solve_rigid, voxel_downsample, voxel_subsample, IcpParams, IcpResult, Refinement, MIN_POINTS,
};
pub use sequence::{build_map, propagate_labels, register_sequence, PropagationParams, Registration, Trajectory};
