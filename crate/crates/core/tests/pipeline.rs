//! Cross-module pipeline tests: registration end-to-end on synthetic
//! scenes with untrained weights (geometry-only checks that don't depend
//! on descriptor quality).

use crossreg_core::cloud::Vec3;
use crossreg_core::net::{NetConfig, NetWeights};
use crossreg_core::register::{register, RegisterParams};
use crossreg_core::synth::{generate_scene, PlacedPrimitive, PoseSpec, SceneSpec};
use crossreg_core::transform::RigidTransform;

/// Varied desk scene: ground plane plus distinct shapes, enough segments
/// for RANSAC and distinct enough descriptors for mutual matching.
fn desk_scene(seed: u64, density: f64) -> SceneSpec {
    let pts = |n: usize| ((n as f64) * density) as usize;
    SceneSpec {
        seed,
        primitives: vec![
            PlacedPrimitive {
                kind: "plane".into(),
                extent: vec![3.0, 3.0],
                points: pts(2600),
                pose: PoseSpec::default(),
            },
            PlacedPrimitive {
                kind: "cuboid".into(),
                extent: vec![0.8, 0.6, 0.5],
                points: pts(1100),
                pose: PoseSpec {
                    translation: [0.8, 0.6, 0.25],
                    ..PoseSpec::default()
                },
            },
            PlacedPrimitive {
                kind: "sphere".into(),
                extent: vec![0.45],
                points: pts(900),
                pose: PoseSpec {
                    translation: [-0.8, -0.7, 0.45],
                    ..PoseSpec::default()
                },
            },
            PlacedPrimitive {
                kind: "cylinder".into(),
                extent: vec![0.3, 0.9],
                points: pts(900),
                pose: PoseSpec {
                    translation: [-0.9, 0.8, 0.45],
                    ..PoseSpec::default()
                },
            },
            PlacedPrimitive {
                kind: "cuboid".into(),
                extent: vec![0.4, 0.4, 1.1],
                points: pts(800),
                pose: PoseSpec {
                    translation: [1.1, -0.9, 0.55],
                    rotation_axis: [0.0, 0.0, 1.0],
                    rotation_deg: 30.0,
                },
            },
        ],
    }
}

#[test]
fn register_identity_recovers_identity_with_full_overlap() {
    let cloud = generate_scene(&desk_scene(41, 0.5)).unwrap().coords_only();
    let weights = NetWeights::init(&NetConfig::desk(), 7).unwrap();
    let result = register(&cloud, &cloud, &weights, &RegisterParams::default()).unwrap();
    assert_eq!(result.overlap.ratio, 1.0);
    assert!(result.transform.rotation_angle() < 1e-6);
    assert!(result.transform.translation().norm() < 1e-6);
    assert!((result.scale_factor - 1.0).abs() < 1e-12);
    assert!(result.inliers.len() >= 3);
}

#[test]
fn register_translated_copy_recovers_translation() {
    let cloud = generate_scene(&desk_scene(43, 0.5)).unwrap().coords_only();
    let offset = Vec3::new(0.4, -0.25, 0.15);
    let target = RigidTransform::translation_only(offset)
        .unwrap()
        .apply_cloud(&cloud);
    let weights = NetWeights::init(&NetConfig::desk(), 7).unwrap();
    let result = register(&cloud, &target, &weights, &RegisterParams::default()).unwrap();
    assert!(result.overlap.ratio >= 0.99, "overlap {}", result.overlap.ratio);
    // The recovered transform maps the target back onto the source.
    assert!((result.transform.translation() + offset).norm() < 1e-6);
    assert!(result.transform.rotation_angle() < 1e-6);
}

#[test]
fn register_scaled_copy_normalizes_scale() {
    let cloud = generate_scene(&desk_scene(47, 0.4)).unwrap().coords_only();
    let target = RigidTransform::identity()
        .with_scale(2.0)
        .unwrap()
        .apply_cloud(&cloud);
    let weights = NetWeights::init(&NetConfig::desk(), 7).unwrap();
    let result = register(&cloud, &target, &weights, &RegisterParams::default()).unwrap();
    assert!((result.scale_factor - 0.5).abs() < 1e-9);
    assert!(result.overlap.ratio >= 0.99, "overlap {}", result.overlap.ratio);
}

#[test]
fn register_propagates_stage_errors() {
    let cloud = generate_scene(&desk_scene(49, 0.2)).unwrap().coords_only();
    let degenerate =
        crossreg_core::PointCloud::from_points(vec![Vec3::zeros(); 40]).unwrap();
    let weights = NetWeights::init(&NetConfig::desk(), 7).unwrap();
    let err = register(&cloud, &degenerate, &weights, &RegisterParams::default()).unwrap_err();
    let msg = err.to_string();
    assert!(msg.contains("scale normalization"), "unexpected error: {msg}");
}
