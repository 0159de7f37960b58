//! Desk-scale fixtures shared by the integration tests.
#![allow(dead_code)]

pub mod oracles;

use std::collections::BTreeMap;

use lidarforge::geometry::{Pose, TriangleMesh, Vec3};
use lidarforge::lidar::{simulate_scan, LabeledPointCloud, LabeledScene, LidarSpec, ScanPattern};
use lidarforge::scene::{Area, Asset, GroundPlane, PlacedInstance, PlacementRules, SceneDescription};

pub const OTHER: u16 = 0;
pub const TRACTOR: u16 = 1;
pub const COMBINE: u16 = 2;

pub fn class_names() -> Vec<String> {
    ["other", "tractor", "combine_harvester"].map(String::from).to_vec()
}

fn cuboids(parts: &[([f64; 3], [f64; 3])]) -> TriangleMesh {
    let mut mesh = TriangleMesh::empty();
    for (lo, hi) in parts {
        mesh.append(&TriangleMesh::cuboid(Vec3::from(*lo), Vec3::from(*hi)));
    }
    mesh
}

pub fn tractor_mesh(length: f64) -> TriangleMesh {
    cuboids(&[
        ([0.0, -0.9, 0.5], [length, 0.9, 1.6]),
        ([0.3, -0.8, 1.6], [1.6, 0.8, 2.9]),
        ([0.0, -1.1, 0.0], [1.2, -0.7, 1.2]),
        ([0.0, 0.7, 0.0], [1.2, 1.1, 1.2]),
    ])
}

pub fn combine_mesh() -> TriangleMesh {
    cuboids(&[
        ([0.0, -1.6, 0.4], [7.5, 1.6, 3.4]),
        ([5.0, -1.0, 3.4], [6.8, 1.0, 4.5]),
        ([7.5, -3.0, 0.2], [8.7, 3.0, 1.2]),
    ])
}

pub fn bale_stack_mesh() -> TriangleMesh {
    cuboids(&[([0.0, 0.0, 0.0], [3.6, 2.4, 1.2]), ([0.6, 0.0, 1.2], [3.0, 2.4, 2.4])])
}

pub fn shed_mesh() -> TriangleMesh {
    cuboids(&[([0.0, 0.0, 0.0], [12.0, 8.0, 5.0])])
}

/// Five assets over three classes, a few hundred triangles in total.
pub fn farm_library() -> Vec<Asset> {
    vec![
        Asset::new("tractor_small", TRACTOR, tractor_mesh(3.5)),
        Asset::new("tractor_large", TRACTOR, tractor_mesh(4.8)),
        Asset::new("combine", COMBINE, combine_mesh()),
        Asset::new("bales", OTHER, bale_stack_mesh()),
        Asset::new("shed", OTHER, shed_mesh()),
    ]
}

pub fn farm_rules() -> PlacementRules {
    let mut counts = BTreeMap::new();
    counts.insert("tractor".to_string(), [1, 4]);
    counts.insert("combine_harvester".to_string(), [0, 2]);
    counts.insert("other".to_string(), [0, 3]);
    PlacementRules {
        area: Area {
            min: [-50.0, -50.0],
            max: [50.0, 50.0],
        },
        min_separation_m: 2.0,
        sensor_max_range_m: 45.0,
        sensor_height_m: 2.0,
        max_rejection_attempts: 1000,
        counts,
    }
}

pub fn desk_lidar() -> LidarSpec {
    LidarSpec {
        channels: 32,
        columns: 512,
        vertical_fov_deg: [-25.0, 15.0],
        range_min_m: 0.3,
        range_max_m: 50.0,
        ..LidarSpec::default()
    }
}

pub fn ground() -> GroundPlane {
    GroundPlane {
        class_id: OTHER,
        half_extent_m: 200.0,
    }
}

/// A fixed yard: vehicles and structures around the origin, laid out so a
/// sensor driving along +x from the origin never clips an object. Obeys
/// `farm_rules`.
pub fn yard() -> (Vec<Asset>, SceneDescription) {
    let library = farm_library();
    let layout: [(usize, f64, f64, f64); 9] = [
        (0, 8.0, 7.0, 0.3),
        (1, 16.0, -8.0, 2.0),
        (2, 2.0, -12.0, 1.2),
        (0, -10.0, -6.0, 4.0),
        (3, 18.0, 14.0, 0.8),
        (4, -14.0, 14.0, 0.1),
        (4, 30.0, -20.0, 0.5),
        (3, -2.0, 10.0, 2.7),
        (2, 26.0, 4.0, 5.2),
    ];
    let instances = layout
        .iter()
        .map(|&(asset_index, x, y, yaw)| {
            let a = &library[asset_index];
            PlacedInstance {
                asset: a.name.clone(),
                asset_index,
                class_id: a.class_id,
                position: [x, y],
                yaw,
                pose: a.placement_pose(x, y, yaw),
                footprint_radius_m: a.footprint_radius_m,
            }
        })
        .collect();
    let scene = SceneDescription {
        instances,
        sensor_pose: Pose::from_translation(Vec3::new(0.0, 0.0, 2.0)),
        seed: 0,
    };
    (library, scene)
}

pub fn yard_scene() -> LabeledScene {
    let (library, scene) = yard();
    scene
        .to_labeled_scene(&library, &class_names(), Some(&ground()))
        .expect("yard builds")
}

/// World poses of a sensor driving along +x at `step` metres per frame while
/// turning `yaw_step` radians per frame, 2 m above the ground.
pub fn drive(frames: usize, step: f64, yaw_step: f64) -> Vec<Pose> {
    let mut poses = Vec::with_capacity(frames);
    let mut pose = Pose::from_translation(Vec3::new(0.0, 0.0, 2.0));
    let motion = Pose::from_yaw(yaw_step, Vec3::new(step, 0.0, 0.0));
    for _ in 0..frames {
        poses.push(pose);
        pose = pose.compose(&motion);
    }
    poses
}

/// One scan per sensor pose, in each sensor's own frame.
pub fn scan_sequence(scene: &LabeledScene, poses: &[Pose], spec: &LidarSpec) -> Vec<LabeledPointCloud> {
    let pattern = ScanPattern::new(spec).expect("valid lidar");
    poses
        .iter()
        .enumerate()
        .map(|(i, p)| simulate_scan(scene, p, &pattern, spec, i as u64))
        .collect()
}

/// Ground-truth pose of frame `i` in frame 0.
pub fn relative_truth(poses: &[Pose]) -> Vec<Pose> {
    let inv0 = poses[0].inverse();
    poses.iter().map(|p| inv0.compose(p)).collect()
}
