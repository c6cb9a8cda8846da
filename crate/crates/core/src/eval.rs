//! Evaluation harness: overlap ratio, recall sweeps over rotation and
//! keypoint shifting, and the experiment comparison table.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cloud::{BoundingSphere, PointCloud, Vec3};
use crate::error::io_err;
use crate::index::SpatialIndex;
use crate::net::{descriptor_distance, forward, Descriptor, NetWeights};
use crate::register::{register, RegisterParams};
use crate::seed::stream_rng;
use crate::synth::{degrade, generate_scene, DegradationProfile, SceneSpec};
use crate::tdf::voxelize_tdf;
use crate::transform::RigidTransform;
use crate::{Error, Result};
use rand::Rng;
use rand_distr::{Distribution, UnitSphere};

/// Fraction of `a`'s points whose nearest neighbor in `b` lies within the
/// threshold (strict `<`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OverlapReport {
    /// N: points of `a` with nearest-neighbor distance below the threshold.
    pub matched: usize,
    /// N_t: total points of `a`.
    pub total: usize,
    pub ratio: f64,
    pub threshold: f64,
}

/// Default overlap distance threshold in scene units.
pub const OVERLAP_THRESHOLD: f64 = 0.05;

pub fn overlap_ratio(a: &PointCloud, b: &PointCloud, threshold: f64) -> Result<OverlapReport> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::InvalidInput(
            "overlap ratio needs two non-empty clouds".into(),
        ));
    }
    let index = SpatialIndex::build(b)?;
    let matched = a
        .points()
        .par_iter()
        .filter(|p| index.nearest(p).1 < threshold)
        .count();
    Ok(OverlapReport {
        matched,
        total: a.len(),
        ratio: matched as f64 / a.len() as f64,
        threshold,
    })
}

/// Recall per sweep step: hit counts (R0) over total keypoints (RN), with
/// the ratio R1 = R0 / RN held exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct RecallCurve {
    /// Degrees for rotation sweeps, percent of radius for shift sweeps.
    pub abscissa: Vec<f64>,
    pub hits: Vec<usize>,
    pub total: usize,
}

impl RecallCurve {
    pub fn recall(&self) -> Vec<f64> {
        self.hits
            .iter()
            .map(|h| *h as f64 / self.total as f64)
            .collect()
    }

    pub fn len(&self) -> usize {
        self.abscissa.len()
    }

    pub fn is_empty(&self) -> bool {
        self.abscissa.is_empty()
    }

    /// CSV with the given abscissa column name, e.g. `angle_deg,recall`.
    pub fn write_csv(&self, path: &Path, abscissa_name: &str) -> Result<()> {
        let mut out = format!("{abscissa_name},recall\n");
        for (x, r) in self.abscissa.iter().zip(self.recall()) {
            writeln!(out, "{x},{r}").expect("string write");
        }
        fs::write(path, out).map_err(|e| io_err(path, e))
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct SweepParams {
    pub n_keypoints: usize,
    /// Keypoint patch radius as a fraction of the containing-sphere radius.
    pub patch_radius_frac: f64,
    /// Per-point shift magnitude (fraction of radius) for the combined
    /// rotation+shift sweep.
    pub shift_frac: f64,
    pub truncation_voxels: f64,
    pub seed: u64,
}

impl Default for SweepParams {
    fn default() -> Self {
        Self {
            n_keypoints: 500,
            patch_radius_frac: 0.10,
            shift_frac: 0.10,
            truncation_voxels: 3.0,
            seed: 0,
        }
    }
}

// Derived RNG stream tags.
const STREAM_KEYPOINTS: u64 = 0;
const STREAM_PERTURB: u64 = 1;
const STREAM_SHIFT_BASE: u64 = 1000;

/// Uniform random keypoint ids without replacement, in draw order.
fn select_keypoints(n_points: usize, n_keypoints: usize, seed: u64) -> Vec<usize> {
    let mut rng = stream_rng(seed, STREAM_KEYPOINTS);
    let mut ids: Vec<usize> = (0..n_points).collect();
    for i in 0..n_keypoints {
        let j = rng.random_range(i..n_points);
        ids.swap(i, j);
    }
    ids.truncate(n_keypoints);
    ids
}

/// Descriptor of the fixed-radius patch around `query`; `None` when the
/// patch is empty (always counts as a miss).
fn patch_descriptor(
    cloud: &PointCloud,
    index: &SpatialIndex,
    query: &Vec3,
    radius: f64,
    weights: &NetWeights,
    truncation_voxels: f64,
) -> Result<Option<Descriptor>> {
    let hits = index.within_radius(query, radius);
    if hits.is_empty() {
        return Ok(None);
    }
    let ids: Vec<usize> = hits.iter().map(|(i, _)| *i).collect();
    let patch = cloud.select(&ids).coords_only();
    let grid = voxelize_tdf(&patch, weights.config.input_dim, truncation_voxels)?;
    forward(weights, &grid).map(Some)
}

fn describe_at(
    cloud: &PointCloud,
    index: &SpatialIndex,
    queries: &[Vec3],
    radius: f64,
    weights: &NetWeights,
    truncation_voxels: f64,
) -> Result<Vec<Option<Descriptor>>> {
    queries
        .par_iter()
        .map(|q| patch_descriptor(cloud, index, q, radius, weights, truncation_voxels))
        .collect()
}

/// Count keypoints whose best-distance match among the probe descriptors is
/// their own index; ties broken by lowest index.
fn count_recalled(base: &[Option<Descriptor>], probe: &[Option<Descriptor>]) -> Result<usize> {
    let mut hits = 0usize;
    for (i, b) in base.iter().enumerate() {
        let Some(b) = b else { continue };
        let mut best = (f64::INFINITY, usize::MAX);
        for (j, p) in probe.iter().enumerate() {
            let Some(p) = p else { continue };
            let d = descriptor_distance(b, p)?;
            if d < best.0 || (d == best.0 && j < best.1) {
                best = (d, j);
            }
        }
        if best.1 == i {
            hits += 1;
        }
    }
    Ok(hits)
}

struct SweepContext<'a> {
    cloud: &'a PointCloud,
    weights: &'a NetWeights,
    params: &'a SweepParams,
    sphere: BoundingSphere,
    radius: f64,
    keypoints: Vec<usize>,
    base_index: SpatialIndex,
    base_descs: Vec<Option<Descriptor>>,
}

impl<'a> SweepContext<'a> {
    fn build(
        cloud: &'a PointCloud,
        weights: &'a NetWeights,
        params: &'a SweepParams,
    ) -> Result<Self> {
        if params.n_keypoints == 0 || cloud.len() < params.n_keypoints {
            return Err(Error::InvalidInput(format!(
                "cloud has {} points, need at least n_keypoints = {}",
                cloud.len(),
                params.n_keypoints
            )));
        }
        if !(params.patch_radius_frac > 0.0) {
            return Err(Error::InvalidInput("patch radius must be positive".into()));
        }
        let sphere = cloud.bounding_sphere()?;
        if sphere.radius <= 0.0 {
            return Err(Error::InvalidInput("degenerate cloud".into()));
        }
        let radius = params.patch_radius_frac * sphere.radius;
        let keypoints = select_keypoints(cloud.len(), params.n_keypoints, params.seed);
        let base_index = SpatialIndex::build(cloud)?;
        let queries: Vec<Vec3> = keypoints.iter().map(|&i| cloud.point(i)).collect();
        let base_descs = describe_at(
            cloud,
            &base_index,
            &queries,
            radius,
            weights,
            params.truncation_voxels,
        )?;
        Ok(Self {
            cloud,
            weights,
            params,
            sphere,
            radius,
            keypoints,
            base_index,
            base_descs,
        })
    }

    /// Recall against a transformed copy of `probe_cloud` (identity when
    /// `angle_deg == 0`, which case is bitwise-exact).
    fn recall_at_angle(&self, probe_cloud: &PointCloud, angle_deg: f64) -> Result<usize> {
        let rotated;
        let probe = if angle_deg == 0.0 {
            probe_cloud
        } else {
            let rot = RigidTransform::rotation_about(
                Vec3::z(),
                angle_deg.to_radians(),
                self.sphere.center,
            )?;
            rotated = rot.apply_cloud(probe_cloud);
            &rotated
        };
        let index = SpatialIndex::build(probe)?;
        let queries: Vec<Vec3> = self.keypoints.iter().map(|&i| probe.point(i)).collect();
        let descs = describe_at(
            probe,
            &index,
            &queries,
            self.radius,
            self.weights,
            self.params.truncation_voxels,
        )?;
        count_recalled(&self.base_descs, &descs)
    }

    /// Recall with keypoint queries displaced by `pct`% of the radius in
    /// uniform random directions; queries leaving the containing sphere are
    /// clamped back to the original point.
    fn recall_at_shift(&self, pct: f64) -> Result<usize> {
        let mut rng = stream_rng(self.params.seed, STREAM_SHIFT_BASE + pct.round() as u64);
        let magnitude = pct / 100.0 * self.sphere.radius;
        let queries: Vec<Vec3> = self
            .keypoints
            .iter()
            .map(|&i| {
                let p = self.cloud.point(i);
                if magnitude == 0.0 {
                    return p;
                }
                let dir = Vec3::from(<[f64; 3]>::from(UnitSphere.sample(&mut rng)));
                let q = p + magnitude * dir;
                if (q - self.sphere.center).norm() > self.sphere.radius {
                    p
                } else {
                    q
                }
            })
            .collect();
        let descs = describe_at(
            self.cloud,
            &self.base_index,
            &queries,
            self.radius,
            self.weights,
            self.params.truncation_voxels,
        )?;
        count_recalled(&self.base_descs, &descs)
    }
}

/// The 72 rotation angles evaluated by the sweeps: 0°, 5°, ..., 355°. The
/// first entry doubles as the identity control (recall 1 by construction
/// on clouds with distinct local geometry).
pub fn sweep_angles() -> Vec<f64> {
    (0..72).map(|k| 5.0 * k as f64).collect()
}

/// Rotation sweep: recall of keypoint descriptors between the cloud and a
/// copy rotated about the vertical axis through its centroid.
pub fn rotation_sweep(
    cloud: &PointCloud,
    weights: &NetWeights,
    params: &SweepParams,
) -> Result<RecallCurve> {
    rotation_sweep_at(cloud, weights, params, &sweep_angles())
}

/// Rotation recall at an explicit list of angles (degrees).
pub fn rotation_sweep_at(
    cloud: &PointCloud,
    weights: &NetWeights,
    params: &SweepParams,
    angles: &[f64],
) -> Result<RecallCurve> {
    let ctx = SweepContext::build(cloud, weights, params)?;
    let hits: Result<Vec<usize>> = angles
        .iter()
        .map(|a| ctx.recall_at_angle(cloud, *a))
        .collect();
    Ok(RecallCurve {
        abscissa: angles.to_vec(),
        hits: hits?,
        total: params.n_keypoints,
    })
}

/// Shift sweep: 50 steps, keypoint queries displaced by 1%..50% of the
/// containing-sphere radius.
pub fn shift_sweep(
    cloud: &PointCloud,
    weights: &NetWeights,
    params: &SweepParams,
) -> Result<RecallCurve> {
    let pcts: Vec<f64> = (1..=50).map(|s| s as f64).collect();
    shift_sweep_at(cloud, weights, params, &pcts)
}

/// Shift recall at an explicit list of percentages.
pub fn shift_sweep_at(
    cloud: &PointCloud,
    weights: &NetWeights,
    params: &SweepParams,
    pcts: &[f64],
) -> Result<RecallCurve> {
    let ctx = SweepContext::build(cloud, weights, params)?;
    let hits: Result<Vec<usize>> = pcts.iter().map(|p| ctx.recall_at_shift(*p)).collect();
    Ok(RecallCurve {
        abscissa: pcts.to_vec(),
        hits: hits?,
        total: params.n_keypoints,
    })
}

/// Combined sweep: every point of the copy receives one random shift of
/// `shift_frac` of the radius (seeded), then the 72-angle rotation sweep
/// runs against the shifted copy. With `shift_frac = 0` this reduces to
/// the rotation sweep exactly.
pub fn rotation_shift_sweep(
    cloud: &PointCloud,
    weights: &NetWeights,
    params: &SweepParams,
) -> Result<RecallCurve> {
    let ctx = SweepContext::build(cloud, weights, params)?;
    let shifted;
    let probe = if params.shift_frac == 0.0 {
        cloud
    } else {
        let mut rng = stream_rng(params.seed, STREAM_PERTURB);
        let magnitude = params.shift_frac * ctx.sphere.radius;
        let points: Vec<Vec3> = cloud
            .points()
            .iter()
            .map(|p| {
                let dir = Vec3::from(<[f64; 3]>::from(UnitSphere.sample(&mut rng)));
                p + magnitude * dir
            })
            .collect();
        shifted = PointCloud::from_points(points)?;
        &shifted
    };
    let angles = sweep_angles();
    let hits: Result<Vec<usize>> = angles
        .iter()
        .map(|a| ctx.recall_at_angle(probe, *a))
        .collect();
    Ok(RecallCurve {
        abscissa: angles,
        hits: hits?,
        total: params.n_keypoints,
    })
}

/// Scene and perturbations for the four experiment analogues.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub translation: [f64; 3],
    pub rotation_deg: f64,
    /// Cross-source degradation applied in the third experiment.
    pub degradation: DegradationProfile,
    pub seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            translation: [0.35, -0.2, 0.15],
            rotation_deg: 30.0,
            degradation: DegradationProfile {
                keep_fraction: 0.5,
                noise_sigma: 0.005,
                outlier_fraction: 0.05,
                ..DegradationProfile::identity()
            },
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentRow {
    pub experiment: String,
    pub method: String,
    pub overlap_ratio: f64,
}

pub fn write_experiments_csv(rows: &[ExperimentRow], path: &Path) -> Result<()> {
    let mut out = String::from("experiment,method,overlap_ratio\n");
    for r in rows {
        writeln!(out, "{},{},{}", r.experiment, r.method, r.overlap_ratio)
            .expect("string write");
    }
    fs::write(path, out).map_err(|e| io_err(path, e))
}

/// Run the four experiment analogues (identity, translation, cross-source
/// degradation, rotation) through `register` for each named weight variant.
/// A failed registration reports overlap 0.
pub fn compare_experiments(
    scene: &SceneSpec,
    variants: &[(String, NetWeights)],
    cfg: &ExperimentConfig,
    params: &RegisterParams,
) -> Result<Vec<ExperimentRow>> {
    let source = generate_scene(scene)?.coords_only();
    let centroid = source.centroid()?;

    let translated =
        RigidTransform::translation_only(Vec3::from(cfg.translation))?.apply_cloud(&source);
    let degraded = degrade(&source, &cfg.degradation, crate::seed::derive_seed(cfg.seed, 1))?;
    let rotated = RigidTransform::rotation_about(
        Vec3::z(),
        cfg.rotation_deg.to_radians(),
        centroid,
    )?
    .apply_cloud(&source);

    let cases: Vec<(&str, &PointCloud)> = vec![
        ("identity", &source),
        ("translation", &translated),
        ("cross_source", &degraded),
        ("rotation", &rotated),
    ];

    let mut rows = Vec::new();
    for (name, target) in cases {
        for (method, weights) in variants {
            let overlap = match register(&source, target, weights, params) {
                Ok(result) => result.overlap.ratio,
                Err(_) => 0.0,
            };
            rows.push(ExperimentRow {
                experiment: name.to_string(),
                method: method.clone(),
                overlap_ratio: overlap,
            });
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::{Layer, NetConfig};
    use crate::synth::{PlacedPrimitive, PoseSpec};

    fn random_cloud(n: usize, seed: u64) -> PointCloud {
        let mut rng = stream_rng(seed, 0);
        PointCloud::from_points(
            (0..n)
                .map(|_| {
                    Vec3::new(
                        rng.random_range(-1.0..1.0),
                        rng.random_range(-1.0..1.0),
                        rng.random_range(-1.0..1.0),
                    )
                })
                .collect(),
        )
        .unwrap()
    }

    fn tiny_weights(seed: u64) -> NetWeights {
        let cfg = NetConfig {
            input_dim: 8,
            layers: vec![
                Layer::Conv3d { kernel: 3, channels: 4 },
                Layer::MaxPool3d { kernel: 2 },
                Layer::Conv3d { kernel: 3, channels: 8 },
            ],
        };
        NetWeights::init(&cfg, seed).unwrap()
    }

    #[test]
    fn overlap_identity_is_one() {
        let c = random_cloud(200, 1);
        let report = overlap_ratio(&c, &c, OVERLAP_THRESHOLD).unwrap();
        assert_eq!(report.ratio, 1.0);
        assert_eq!(report.matched, 200);
    }

    #[test]
    fn overlap_far_translation_is_zero() {
        let c = random_cloud(150, 2);
        let far = RigidTransform::translation_only(Vec3::new(5.0, 0.0, 0.0))
            .unwrap()
            .apply_cloud(&c);
        let report = overlap_ratio(&far, &c, OVERLAP_THRESHOLD).unwrap();
        assert_eq!(report.ratio, 0.0);
    }

    #[test]
    fn overlap_half_constructed() {
        // 100 points; the copy has the first 50 moved far beyond the
        // threshold, the rest untouched.
        let c = random_cloud(100, 3);
        let mut moved = c.points().to_vec();
        for p in moved.iter_mut().take(50) {
            p.x += 10.0;
        }
        let a = PointCloud::from_points(moved).unwrap();
        let report = overlap_ratio(&a, &c, OVERLAP_THRESHOLD).unwrap();
        assert_eq!(report.matched, 50);
        assert_eq!(report.ratio, 0.5);
    }

    #[test]
    fn overlap_errors_on_empty() {
        let c = random_cloud(10, 4);
        assert!(overlap_ratio(&PointCloud::new(), &c, 0.05).is_err());
        assert!(overlap_ratio(&c, &PointCloud::new(), 0.05).is_err());
    }

    fn sweep_cloud() -> PointCloud {
        generate_scene(&SceneSpec {
            seed: 77,
            primitives: vec![
                PlacedPrimitive {
                    kind: "sphere".into(),
                    extent: vec![0.6],
                    points: 400,
                    pose: PoseSpec::default(),
                },
                PlacedPrimitive {
                    kind: "cuboid".into(),
                    extent: vec![0.8, 0.5, 0.3],
                    points: 300,
                    pose: PoseSpec {
                        translation: [1.2, 0.3, 0.0],
                        ..PoseSpec::default()
                    },
                },
            ],
        })
        .unwrap()
        .coords_only()
    }

    fn small_sweep_params() -> SweepParams {
        SweepParams {
            n_keypoints: 25,
            seed: 5,
            ..SweepParams::default()
        }
    }

    #[test]
    fn identity_control_recall_is_exactly_one() {
        let cloud = sweep_cloud();
        let weights = tiny_weights(3);
        let params = small_sweep_params();
        let curve = rotation_sweep_at(&cloud, &weights, &params, &[0.0]).unwrap();
        assert_eq!(curve.hits, vec![params.n_keypoints]);
        assert_eq!(curve.recall(), vec![1.0]);
    }

    #[test]
    fn rotation_sweep_has_72_entries_in_unit_range() {
        let cloud = sweep_cloud();
        let weights = tiny_weights(3);
        let mut params = small_sweep_params();
        params.n_keypoints = 10;
        let curve = rotation_sweep(&cloud, &weights, &params).unwrap();
        assert_eq!(curve.len(), 72);
        assert_eq!(curve.abscissa[0], 0.0);
        assert_eq!(curve.abscissa[71], 355.0);
        assert!(curve.recall().iter().all(|r| (0.0..=1.0).contains(r)));
        // R1 = R0 / RN holds exactly.
        for (h, r) in curve.hits.iter().zip(curve.recall()) {
            assert_eq!(r, *h as f64 / curve.total as f64);
        }
    }

    #[test]
    fn shift_zero_control_recall_is_one_and_curve_has_50_entries() {
        let cloud = sweep_cloud();
        let weights = tiny_weights(4);
        let params = small_sweep_params();
        let control = shift_sweep_at(&cloud, &weights, &params, &[0.0]).unwrap();
        assert_eq!(control.recall(), vec![1.0]);
        let mut fast = params;
        fast.n_keypoints = 8;
        let curve = shift_sweep(&cloud, &weights, &fast).unwrap();
        assert_eq!(curve.len(), 50);
        assert_eq!(curve.abscissa[0], 1.0);
        assert_eq!(curve.abscissa[49], 50.0);
    }

    #[test]
    fn shift_clamp_keeps_surface_keypoints_at_their_origin() {
        // A sphere's surface points always leave the containing sphere when
        // shifted by twice its radius, so every query clamps back to its
        // original point and recall stays 1. Dense sampling keeps keypoint
        // patches distinct (sparse clouds can give two keypoints identical
        // patch sets, where the lowest-index tie-break makes one a miss).
        let cloud = generate_scene(&SceneSpec {
            seed: 12,
            primitives: vec![PlacedPrimitive {
                kind: "sphere".into(),
                extent: vec![1.0],
                points: 4000,
                pose: PoseSpec::default(),
            }],
        })
        .unwrap()
        .coords_only();
        let weights = tiny_weights(5);
        let params = SweepParams {
            n_keypoints: 15,
            seed: 9,
            ..SweepParams::default()
        };
        // 200% of radius: every shifted query exits the sphere.
        let curve = shift_sweep_at(&cloud, &weights, &params, &[200.0]).unwrap();
        assert_eq!(curve.recall(), vec![1.0]);
    }

    #[test]
    fn rotation_shift_with_zero_shift_equals_rotation_sweep() {
        let cloud = sweep_cloud();
        let weights = tiny_weights(6);
        let mut params = small_sweep_params();
        params.n_keypoints = 8;
        params.shift_frac = 0.0;
        let combined = rotation_shift_sweep(&cloud, &weights, &params).unwrap();
        let rotation = rotation_sweep(&cloud, &weights, &params).unwrap();
        assert_eq!(combined, rotation);
    }

    #[test]
    fn sweeps_are_deterministic() {
        let cloud = sweep_cloud();
        let weights = tiny_weights(7);
        let mut params = small_sweep_params();
        params.n_keypoints = 8;
        let a = rotation_shift_sweep(&cloud, &weights, &params).unwrap();
        let b = rotation_shift_sweep(&cloud, &weights, &params).unwrap();
        assert_eq!(a, b);
        let c = shift_sweep_at(&cloud, &weights, &params, &[10.0, 20.0]).unwrap();
        let d = shift_sweep_at(&cloud, &weights, &params, &[10.0, 20.0]).unwrap();
        assert_eq!(c, d);
    }

    #[test]
    fn insufficient_points_rejected() {
        let cloud = random_cloud(10, 5);
        let weights = tiny_weights(8);
        let params = SweepParams {
            n_keypoints: 50,
            ..SweepParams::default()
        };
        assert!(rotation_sweep(&cloud, &weights, &params).is_err());
    }
}
