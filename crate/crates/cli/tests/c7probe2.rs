use crossreg_core::eval::{rotation_sweep_at, SweepParams};
use crossreg_core::net::{save_weights, train, NetConfig, NetWeights, PairSample, TrainConfig};
use crossreg_core::sampler::{augment, sample_pairs, AugmentAxis, SampleConfig};
use crossreg_core::synth::*;
use crossreg_core::tdf::voxelize_tdf;
use rayon::prelude::*;
use std::path::Path;

fn prim(kind: &str, extent: Vec<f64>, points: usize, t: [f64;3], deg: f64) -> PlacedPrimitive {
    PlacedPrimitive { kind: kind.into(), extent, points,
        pose: PoseSpec { translation: t, rotation_axis: [0.0,0.0,1.0], rotation_deg: deg } }
}

fn scene(seed: u64) -> SceneSpec {
    SceneSpec { seed, primitives: vec![
        prim("plane", vec![3.0,3.0], 5200, [0.0,0.0,0.0], 0.0),
        prim("cuboid", vec![0.8,0.6,0.5], 2200, [0.8,0.6,0.25], 0.0),
        prim("sphere", vec![0.45], 1800, [-0.8,-0.7,0.45], 0.0),
        prim("cylinder", vec![0.3,0.9], 1800, [-0.9,0.8,0.45], 0.0),
        prim("cuboid", vec![0.4,0.4,1.1], 1600, [1.1,-0.9,0.55], 30.0),
    ]}
}

fn to_samples(pairs: &[crossreg_core::sampler::TrainingPair]) -> Vec<PairSample> {
    pairs.par_iter().map(|p| {
        let a = voxelize_tdf(&p.points_a, 16, 3.0).unwrap();
        let b = voxelize_tdf(&p.points_b, 16, 3.0).unwrap();
        PairSample::from_grids(&a, &b, p.label)
    }).collect()
}

#[test]
fn train_variants() {
    let t0 = std::time::Instant::now();
    let prof_a = DegradationProfile { keep_fraction: 1.0, ..DegradationProfile::identity() };
    let prof_b = DegradationProfile { keep_fraction: 0.9, ..DegradationProfile::identity() };
    let (a, b, gt) = make_cross_source_pair(&scene(11), &prof_a, &prof_b, 1, 2).unwrap();
    let b_aligned = gt.inverse().apply_cloud(&b);
    let cfg = SampleConfig { n_pos: 800, n_neg: 800, ..SampleConfig::default() };
    let outcome = sample_pairs(&a, &b_aligned, &cfg, 5).unwrap();
    let aug_pairs = augment(&outcome.pairs, AugmentAxis::Z, 6);
    let aug_samples = to_samples(&aug_pairs);
    let abl_samples = to_samples(&outcome.pairs);
    let net_cfg = NetConfig::desk();
    let tc = TrainConfig { epochs: 8, ..TrainConfig::default() };
    let (w_aug, _) = train(NetWeights::init(&net_cfg, 3).unwrap(), &aug_samples, &tc).unwrap();
    let (w_abl, _) = train(NetWeights::init(&net_cfg, 3).unwrap(), &abl_samples, &tc).unwrap();
    save_weights(&w_aug, Path::new("/tmp/c7_aug.bin")).unwrap();
    save_weights(&w_abl, Path::new("/tmp/c7_abl.bin")).unwrap();
    println!("trained in {:?}", t0.elapsed());
}
