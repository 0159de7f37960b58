//! Synthetic labeled LiDAR point clouds.
//!
//! A spinning LiDAR is ray-cast against class-tagged triangle meshes placed
//! under randomized placement rules, producing point clouds with a class label
//! on every point. Around that core the crate provides the dataset plumbing
//! (binary cloud format, manifests, mixing and downsampling), semi-automatic
//! annotation of scan sequences (ICP registration, ground removal, clustering,
//! label propagation) and IoU evaluation.

pub mod annotate;
pub mod dataset;
pub mod error;
pub mod geometry;
pub mod hash;
pub mod lidar;
pub mod metrics;
pub mod scene;

pub use error::{Error, Result};
