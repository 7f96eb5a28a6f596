mod common;

use std::fs;
use std::path::Path;

use activelo::manifest::{camera_to_lidar, load_calibration, LoadedManifest, Manifest, ManifestEntry, ManifestError};
use activelo::poses::{load_poses, parse_poses, save_poses};
use activelo::velodyne::{encode_bin, load_bin, parse_bin, save_bin, VelodyneFrames};
use activelo_core::geom::{compose, geodesic_distance, invert, EulerAngles, Pose, Rotation};
use activelo_core::sequence::FrameSource;
use activelo_core::{PointCloud, Weather};
use nalgebra::{Point3, Vector3};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_pose(rng: &mut ChaCha8Rng) -> Pose {
    let e = EulerAngles::new(
        rng.random_range(-3.1..3.1),
        rng.random_range(-1.5..1.5),
        rng.random_range(-3.1..3.1),
    );
    let t = Vector3::new(
        rng.random_range(-500.0..500.0),
        rng.random_range(-500.0..500.0),
        rng.random_range(-20.0..20.0),
    );
    Pose::new(Rotation::from_euler(&e), t)
}

fn random_cloud(rng: &mut ChaCha8Rng, n: usize) -> PointCloud {
    let mut points = Vec::with_capacity(n);
    let mut intensity = Vec::with_capacity(n);
    for _ in 0..n {
        let mut c = || rng.random_range(-80.0f32..80.0) as f64;
        points.push(Point3::new(c(), c(), c()));
        intensity.push(rng.random_range(0.0f32..1.0));
    }
    let mut cloud = PointCloud::from_points(points);
    cloud.intensity = Some(intensity);
    cloud
}

#[test]
fn pose_file_rewrites_byte_identically() {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let poses: Vec<Pose> = (0..100).map(|_| random_pose(&mut rng)).collect();
    let (a, b) = (dir.path().join("a.txt"), dir.path().join("b.txt"));
    save_poses(&a, &poses).unwrap();
    let loaded = load_poses(&a).unwrap();
    assert_eq!(loaded.len(), 100);
    save_poses(&b, &loaded).unwrap();
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    assert_eq!(load_poses(&b).unwrap(), loaded);
    for (p, q) in poses.iter().zip(&loaded) {
        assert!(geodesic_distance(&p.rotation, &q.rotation) < 1e-7);
        assert!((p.translation - q.translation).norm() < 1e-5);
    }
}

#[test]
fn pose_file_errors() {
    let dir = tempfile::tempdir().unwrap();
    let err = load_poses(dir.path().join("absent.txt")).unwrap_err();
    assert!(err.to_string().contains("absent.txt"));
    let text = "1 0 0 0 0 1 0 0 0 0 1 0\n1 0 0 0 0 1 0 0 0 0 1\n";
    assert_eq!(
        parse_poses(text.as_bytes()).unwrap_err().to_string(),
        "line 2: expected 12 values, found 11"
    );
}

#[test]
fn two_record_scan() {
    let mut bytes = Vec::new();
    for v in [1.0f32, 2.0, 3.0, 0.5, -1.0, 0.0, 4.5, 0.25] {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    assert_eq!(bytes.len(), 32);
    let scan = parse_bin(&bytes).unwrap();
    assert_eq!(scan.cloud.points, vec![Point3::new(1.0, 2.0, 3.0), Point3::new(-1.0, 0.0, 4.5)]);
    assert_eq!(scan.cloud.intensity, Some(vec![0.5, 0.25]));
}

#[test]
fn empty_scan_file_is_an_empty_cloud() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("000000.bin");
    fs::write(&path, []).unwrap();
    let scan = load_bin(&path).unwrap();
    assert!(scan.cloud.is_empty());
    assert_eq!(scan.dropped, 0);
}

#[test]
fn ten_thousand_points_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let cloud = random_cloud(&mut ChaCha8Rng::seed_from_u64(2), 10_000);
    let path = dir.path().join("scan.bin");
    save_bin(&path, &cloud).unwrap();
    assert_eq!(fs::metadata(&path).unwrap().len(), 160_000);
    let back = load_bin(&path).unwrap().cloud;
    assert_eq!(back.points, cloud.points);
    assert_eq!(back.intensity, cloud.intensity);
    assert_eq!(encode_bin(&back), fs::read(&path).unwrap());
}

fn write_scans(dir: &Path, n: usize, seed: u64) {
    fs::create_dir_all(dir).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for i in 0..n {
        save_bin(dir.join(format!("{i:06}.bin")), &random_cloud(&mut rng, 20)).unwrap();
    }
}

#[test]
fn frames_load_lazily_into_a_bounded_cache() {
    let dir = tempfile::tempdir().unwrap();
    write_scans(dir.path(), 5, 3);
    let frames = VelodyneFrames::open(dir.path(), 2).unwrap();
    assert_eq!(frames.frame_count(), 5);
    assert_eq!(frames.cached(), 0);
    for i in 0..5 {
        assert_eq!(frames.cloud(i).unwrap().frame_index, i);
        assert!(frames.cached() <= 2);
    }
    let again = frames.cloud(4).unwrap();
    assert_eq!(*again, load_bin(dir.path().join("000004.bin")).unwrap().cloud.with_frame_index(4));
    assert!(frames.cloud(5).is_err());
}

fn file_entry(root: &Path, id: &str, frames: usize, weather: Weather) -> ManifestEntry {
    let seq_dir = root.join(id);
    write_scans(&seq_dir.join("velodyne"), frames, 7);
    let poses: Vec<Pose> = (0..frames)
        .map(|i| Pose::from_translation(Vector3::new(i as f64 + 10.0, 5.0, 0.0)))
        .collect();
    save_poses(seq_dir.join("poses.txt"), &poses).unwrap();
    let mut e = ManifestEntry::files(id, format!("{id}/poses.txt"), format!("{id}/velodyne"));
    e.weather = Some(weather);
    e
}

#[test]
fn pool_of_sixty_nine() {
    let dir = tempfile::tempdir().unwrap();
    let sequences: Vec<ManifestEntry> = (0..69)
        .map(|i| {
            let w = if i < 11 { Weather::General } else { Weather::Snowy };
            file_entry(dir.path(), &format!("{i:02}"), 2, w)
        })
        .collect();
    let manifest = Manifest {
        frame_rate: Some(10.0),
        sequences,
    };
    let path = common::write_manifest(dir.path(), &manifest);
    let pool = LoadedManifest::load(&path).unwrap().build_pool(4).unwrap();
    assert_eq!(pool.len(), 69);
    assert_eq!(pool.general().count(), 11);
    let first = pool.get("00").unwrap();
    assert_eq!(first.positions[0], Vector3::zeros());
    assert_eq!(first.positions[1], Vector3::new(1.0, 0.0, 0.0));
    for (p, q) in first.positions.iter().zip(first.gt_poses.as_ref().unwrap()) {
        assert_eq!(*p, q.translation);
    }
    assert_eq!(first.cloud(1).unwrap().len(), 20);
}

#[test]
fn manifest_errors() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.json");
    fs::write(&path, r#"{"sequences": []}"#).unwrap();
    assert!(matches!(LoadedManifest::load(&path), Err(ManifestError::Empty)));

    let a = file_entry(dir.path(), "a", 3, Weather::General);
    let dup = Manifest {
        frame_rate: None,
        sequences: vec![a.clone(), a.clone()],
    };
    assert!(matches!(LoadedManifest::from_manifest(dup, dir.path()), Err(ManifestError::DuplicateId(id)) if id == "a"));

    let mut missing = a.clone();
    missing.id = "gone".into();
    missing.poses = Some("nowhere/poses.txt".into());
    let loaded = LoadedManifest::from_manifest(
        Manifest {
            frame_rate: None,
            sequences: vec![a.clone(), missing],
        },
        dir.path(),
    )
    .unwrap();
    let err = loaded.build_pool(4).unwrap_err();
    assert!(err.to_string().starts_with("sequence gone:"), "{err}");
    let (ok, failed) = loaded.resolve_all(4);
    assert_eq!((ok.len(), failed.len()), (1, 1));

    let mut short = file_entry(dir.path(), "short", 3, Weather::General);
    write_scans(&dir.path().join("short/velodyne"), 0, 0);
    fs::remove_file(dir.path().join("short/velodyne/000002.bin")).unwrap();
    short.id = "short".into();
    let loaded = LoadedManifest::from_manifest(
        Manifest {
            frame_rate: None,
            sequences: vec![short],
        },
        dir.path(),
    )
    .unwrap();
    assert!(loaded.build_pool(4).unwrap_err().to_string().contains("3 poses but 2 scans"));
}

#[test]
fn synthetic_entries_build_generated_sequences() {
    let manifest = common::mixed_manifest(1, 1, 2.0, 4);
    let pool = LoadedManifest::from_manifest(manifest, ".").unwrap().build_pool(4).unwrap();
    assert_eq!(pool.ids(), ["c00", "x00"]);
    assert_eq!(pool.get("x00").unwrap().weather, Weather::Snowy);
    assert!(pool.get("c00").unwrap().cloud(0).unwrap().len() > 100);
}

#[test]
fn camera_poses_move_into_the_lidar_frame() {
    let dir = tempfile::tempdir().unwrap();
    let tr = Pose::new(
        Rotation::from_euler(&EulerAngles::new(-1.2, 0.01, -1.5)),
        Vector3::new(0.03, -0.08, -0.27),
    );
    let row: Vec<String> = tr.to_row_major().iter().map(|v| format!("{v:.17e}")).collect();
    let calib = dir.path().join("calib.txt");
    fs::write(&calib, format!("P0: 1 0 0 0 0 1 0 0 0 0 1 0\nTr: {}\n", row.join(" "))).unwrap();
    let loaded = load_calibration(&calib).unwrap();
    assert!(geodesic_distance(&loaded.rotation, &tr.rotation) < 1e-12);

    let lidar = vec![Pose::identity(), Pose::new(Rotation::about_z(0.1), Vector3::new(2.0, 0.5, 0.0))];
    let camera: Vec<Pose> = lidar.iter().map(|p| compose(&tr, &compose(p, &invert(&tr)))).collect();
    for (got, want) in camera_to_lidar(&camera, &loaded).iter().zip(&lidar) {
        assert!(geodesic_distance(&got.rotation, &want.rotation) < 1e-12);
        assert!((got.translation - want.translation).norm() < 1e-12);
    }
    fs::write(&calib, "P0: 1 0 0\n").unwrap();
    assert!(load_calibration(&calib).unwrap_err().contains("no Tr: line"));
}

proptest! {
    #[test]
    fn scans_round_trip(coords in prop::collection::vec((-1e4f32..1e4, -1e4f32..1e4, -1e4f32..1e4, 0f32..1.0), 0..200)) {
        let mut cloud = PointCloud::from_points(coords.iter().map(|&(x, y, z, _)| Point3::new(x as f64, y as f64, z as f64)).collect());
        cloud.intensity = Some(coords.iter().map(|c| c.3).collect());
        let scan = parse_bin(&encode_bin(&cloud)).unwrap();
        prop_assert_eq!(scan.cloud.points, cloud.points);
        prop_assert_eq!(scan.cloud.intensity, cloud.intensity);
    }

    #[test]
    fn truncated_scans_are_rejected(len in 1usize..200) {
        prop_assume!(len % 16 != 0);
        prop_assert!(parse_bin(&vec![0u8; len]).is_err());
    }

    #[test]
    fn pose_text_round_trips_after_one_pass(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let poses: Vec<Pose> = (0..5).map(|_| random_pose(&mut rng)).collect();
        let mut first = Vec::new();
        activelo::poses::write_poses(&mut first, &poses).unwrap();
        let parsed = parse_poses(first.as_slice()).unwrap();
        let mut second = Vec::new();
        activelo::poses::write_poses(&mut second, &parsed).unwrap();
        prop_assert_eq!(first, second);
    }
}
