mod support;

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use lidarforge::dataset::{
    decode_lpc, encode_lpc, generate_dataset, list_clouds, mix_datasets, read_lpc, write_lpc, DatasetManifest,
    DatasetRecipe, MixSpec, Origin, MANIFEST_FILE,
};
use lidarforge::geometry::Vec3;
use lidarforge::lidar::LabeledPointCloud;
use lidarforge::Error;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};
use support::oracles::*;
use support::*;

fn random_cloud(n: usize, with_ids: bool, seed: u64) -> LabeledPointCloud {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut c = LabeledPointCloud::new(class_names());
    c.points = (0..n)
        .map(|_| {
            Vec3::new(
                rng.random_range(-80.0..80.0),
                rng.random_range(-80.0..80.0),
                rng.random_range(-5.0..10.0),
            )
        })
        .collect();
    c.labels = (0..n).map(|_| rng.random_range(0..3)).collect();
    if with_ids {
        c.rings = Some((0..n).map(|_| rng.random()).collect());
        c.columns = Some((0..n).map(|_| rng.random()).collect());
    }
    c
}

#[test]
fn hundred_thousand_points_double_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let cloud = random_cloud(100_000, true, 3);
    let (a, b) = (dir.path().join("a.lpc"), dir.path().join("b.lpc"));
    write_lpc(&cloud, &a).unwrap();
    let back = read_lpc(&a).unwrap();
    write_lpc(&back, &b).unwrap();
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    assert_eq!(back.labels, cloud.labels);
    assert_eq!(back.rings, cloud.rings);
    for (p, q) in back.points.iter().zip(&cloud.points) {
        assert_eq!(p.map(|v| v as f32), q.map(|v| v as f32));
    }
    assert_eq!(read_lpc(&b).unwrap(), back);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]
    #[test]
    fn round_trip_is_identity_after_first_write(n in 0usize..3000, ids: bool, seed: u64) {
        let first = encode_lpc(&random_cloud(n, ids, seed)).unwrap();
        let cloud = decode_lpc(&first, Path::new("mem")).unwrap();
        let second = encode_lpc(&cloud).unwrap();
        prop_assert_eq!(&first, &second);
        prop_assert_eq!(decode_lpc(&second, Path::new("mem")).unwrap(), cloud);
    }

    #[test]
    fn any_truncation_is_rejected(n in 1usize..50, cut in 0.0..1.0f64) {
        let bytes = encode_lpc(&random_cloud(n, true, 1)).unwrap();
        let len = (cut * bytes.len() as f64) as usize;
        let r = decode_lpc(&bytes[..len], Path::new("t.lpc"));
        let corrupt = matches!(r, Err(Error::CorruptLpc { .. }));
        prop_assert!(corrupt);
    }
}

#[test]
fn bad_magic_names_offset_zero() {
    let mut bytes = encode_lpc(&random_cloud(4, false, 1)).unwrap();
    bytes[0] = b'X';
    match decode_lpc(&bytes, Path::new("m.lpc")) {
        Err(Error::CorruptLpc { offset, .. }) => assert_eq!(offset, 0),
        other => panic!("{other:?}"),
    }
}

fn recipe<'a>(
    library: &'a [lidarforge::scene::Asset],
    rules: &'a lidarforge::scene::PlacementRules,
    names: &'a [String],
    lidar: &'a lidarforge::lidar::LidarSpec,
) -> DatasetRecipe<'a> {
    DatasetRecipe {
        name: "desk".into(),
        library,
        rules,
        class_names: names,
        lidar,
        ground: Some(ground()),
        max_points: None,
        config_digest: "0123456789abcdef".into(),
    }
}

fn tree(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut v: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let p = e.unwrap().path();
            (p.file_name().unwrap().into(), std::fs::read(&p).unwrap())
        })
        .collect();
    v.sort();
    v
}

#[test]
fn generation_is_deterministic_and_worker_independent() {
    let (library, rules, names, lidar) = (farm_library(), farm_rules(), class_names(), desk_lidar());
    let r = recipe(&library, &rules, &names, &lidar);
    let dirs: Vec<_> = (0..3).map(|_| tempfile::tempdir().unwrap()).collect();
    generate_dataset(&r, 6, 7, dirs[0].path(), 1).unwrap();
    generate_dataset(&r, 6, 7, dirs[1].path(), 4).unwrap();
    generate_dataset(&r, 6, 8, dirs[2].path(), 4).unwrap();
    let (a, b, c) = (tree(dirs[0].path()), tree(dirs[1].path()), tree(dirs[2].path()));
    assert_eq!(a.len(), 7);
    assert_eq!(a, b);
    assert_ne!(a, c);
}

#[test]
fn manifest_matches_recount() {
    let (library, rules, names, lidar) = (farm_library(), farm_rules(), class_names(), desk_lidar());
    let mut r = recipe(&library, &rules, &names, &lidar);
    r.max_points = Some(8000);
    let dir = tempfile::tempdir().unwrap();
    let m = generate_dataset(&r, 12, 1, dir.path(), 2).unwrap();
    assert_eq!(m, DatasetManifest::read(&dir.path().join(MANIFEST_FILE)).unwrap());
    let files = list_clouds(dir.path()).unwrap();
    assert_eq!(files.len(), 12);
    let mut hist = [0u64; 3];
    for (entry, path) in m.files.iter().zip(&files) {
        assert_eq!(dir.path().join(&entry.path), *path);
        let cloud = read_lpc(path).unwrap();
        assert!(cloud.len() <= 8000);
        let mut h = [0u64; 3];
        for &l in &cloud.labels {
            h[l as usize] += 1;
        }
        assert_eq!(entry.class_histogram, h.to_vec());
        assert_eq!(entry.point_count, cloud.len() as u64);
        for k in 0..3 {
            hist[k] += h[k];
        }
    }
    assert_eq!(m.class_histogram, hist.to_vec());
    let total: u64 = hist.iter().sum();
    for k in 0..3 {
        assert_eq!(m.class_percentages[k], 100.0 * hist[k] as f64 / total as f64);
    }
    assert!((m.class_percentages.iter().sum::<f64>() - 100.0).abs() < 0.01);
    assert!(hist.iter().all(|&h| h > 0));
}

#[test]
fn empty_dataset_has_manifest() {
    let (library, rules, names, lidar) = (farm_library(), farm_rules(), class_names(), desk_lidar());
    let dir = tempfile::tempdir().unwrap();
    let m = generate_dataset(&recipe(&library, &rules, &names, &lidar), 0, 0, dir.path(), 1).unwrap();
    assert!(m.files.is_empty());
    assert_eq!(m.config_digest.len(), 16);
    assert_eq!(m.class_percentages, vec![0.0; 3]);
}

#[test]
fn placement_failure_reports_scene_index() {
    let (library, mut rules, names, lidar) = (farm_library(), farm_rules(), class_names(), desk_lidar());
    rules.counts.insert("tractor".into(), [60, 60]);
    rules.area.min = [-15.0, -15.0];
    rules.area.max = [15.0, 15.0];
    rules.max_rejection_attempts = 20;
    let dir = tempfile::tempdir().unwrap();
    match generate_dataset(&recipe(&library, &rules, &names, &lidar), 2, 0, dir.path(), 1) {
        Err(Error::Scene { index, .. }) => assert!(index < 2),
        Err(Error::InvalidRules(_)) => {}
        other => panic!("{other:?}"),
    }
}

#[test]
fn downsample_inclusion_is_uniform() {
    let (p, subset_ok) = inclusion_p_value(10_000, 4_000, 300);
    assert!(subset_ok);
    assert!(p > 0.001, "p = {p}");
}

#[test]
fn biased_sampler_would_be_caught() {
    // Sanity check of the statistic itself: always taking the first k points
    // is maximally non-uniform.
    let (n, k, rounds) = (1000usize, 400usize, 50u64);
    let q = k as f64 / n as f64;
    let e = rounds as f64 * q;
    let stat: f64 = (0..n)
        .map(|i| if i < k { rounds as f64 } else { 0.0 })
        .map(|c| (c - e).powi(2))
        .sum::<f64>()
        / (e * (1.0 - q));
    let p = 1.0 - ChiSquared::new((n - 1) as f64).unwrap().cdf(stat);
    assert!(p < 1e-6);
}

#[test]
fn mix_matches_oversampling_recipe() {
    let real: Vec<PathBuf> = (0..1200).map(|i| format!("real/{i:06}.lpc").into()).collect();
    let synthetic: Vec<PathBuf> = (0..12_000).map(|i| format!("syn/{i:06}.lpc").into()).collect();
    let spec = MixSpec {
        total: 10_000,
        synthetic_fraction: 0.5,
        real,
        synthetic,
    };
    let plan = mix_datasets(&spec, 0).unwrap();
    let syn: Vec<_> = plan.entries.iter().filter(|e| e.origin == Origin::Synthetic).collect();
    assert_eq!(syn.len(), 5000);
    assert!(syn.iter().all(|e| e.count == 1));
    assert_eq!(syn.iter().map(|e| &e.path).collect::<HashSet<_>>().len(), 5000);
    let real: Vec<_> = plan.entries.iter().filter(|e| e.origin == Origin::Real).collect();
    assert_eq!(real.iter().filter(|e| e.count == 5).count(), 200);
    assert_eq!(real.iter().filter(|e| e.count == 4).count(), 1000);
    assert_eq!(plan.expanded().len(), 10_000);
    assert_eq!(plan, mix_datasets(&spec, 0).unwrap());
}
