//! Registration pipeline: scale normalization, control point description,
//! mutual-NN descriptor matching, and RANSAC rigid alignment with a
//! closed-form Kabsch fit.

use nalgebra::{Matrix3, SymmetricEigen, Vector3, SVD};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cloud::{PointCloud, Vec3};
use crate::eval::{overlap_ratio, OverlapReport};
use crate::features::point_features;
use crate::net::{descriptor_distance, forward, NetWeights};
use crate::segment::{extract_control_points, ControlPoint, SegmentationParams};
use crate::seed::stream_rng;
use crate::tdf::voxelize_tdf;
use crate::transform::RigidTransform;
use crate::{Error, Result};
use rand::Rng;

/// A matched pair of control points with its descriptor distance.
#[derive(Debug, Clone, PartialEq)]
pub struct Correspondence {
    pub source: usize,
    pub target: usize,
    pub distance: f64,
}

/// Rescale `target` about its centroid so its bounding-sphere radius equals
/// the source's. Returns the rescaled cloud and the applied factor.
pub fn normalize_scale(source: &PointCloud, target: &PointCloud) -> Result<(PointCloud, f64)> {
    let rs = source.bounding_sphere()?;
    let rt = target.bounding_sphere()?;
    if rs.radius <= 0.0 || rt.radius <= 0.0 {
        return Err(Error::InvalidInput(
            "scale normalization needs clouds with positive radius".into(),
        ));
    }
    let factor = rs.radius / rt.radius;
    let rescale = RigidTransform::scaling_about(factor, rt.center)?;
    Ok((rescale.apply_cloud(target), factor))
}

/// Mutual nearest neighbors in descriptor space: (i, j) is kept iff j is
/// i's nearest target and i is j's nearest source; ties by lowest id.
/// Empty inputs yield an empty list.
pub fn match_descriptors(a: &[ControlPoint], b: &[ControlPoint]) -> Result<Vec<Correspondence>> {
    let descs = |cps: &[ControlPoint], side: &str| -> Result<Vec<crate::net::Descriptor>> {
        cps.iter()
            .map(|cp| {
                cp.descriptor.clone().ok_or_else(|| {
                    Error::InvalidInput(format!("{side} control point lacks a descriptor"))
                })
            })
            .collect()
    };
    if a.is_empty() || b.is_empty() {
        return Ok(Vec::new());
    }
    let da = descs(a, "source")?;
    let db = descs(b, "target")?;
    let nn = |from: &[crate::net::Descriptor], to: &[crate::net::Descriptor]| -> Result<Vec<(usize, f64)>> {
        from.iter()
            .map(|f| {
                let mut best = (f64::INFINITY, usize::MAX);
                for (j, t) in to.iter().enumerate() {
                    let d = descriptor_distance(f, t)?;
                    if d < best.0 || (d == best.0 && j < best.1) {
                        best = (d, j);
                    }
                }
                Ok((best.1, best.0))
            })
            .collect()
    };
    let a_to_b = nn(&da, &db)?;
    let b_to_a = nn(&db, &da)?;
    let mut out = Vec::new();
    for (i, &(j, d)) in a_to_b.iter().enumerate() {
        if b_to_a[j].0 == i {
            out.push(Correspondence {
                source: i,
                target: j,
                distance: d,
            });
        }
    }
    Ok(out)
}

/// Ratio of the middle to largest eigenvalue of the centered scatter;
/// collinear point sets drive it to zero.
fn planarity_ratio(points: &[Vec3]) -> f64 {
    let n = points.len() as f64;
    let mut mean = Vec3::zeros();
    for p in points {
        mean += p;
    }
    mean /= n;
    let mut scatter = Matrix3::zeros();
    for p in points {
        let d = p - mean;
        scatter += d * d.transpose();
    }
    let eig = SymmetricEigen::new(scatter / n);
    let mut ev: Vec<f64> = eig.eigenvalues.iter().map(|v| v.max(0.0)).collect();
    ev.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    if ev[2] <= 0.0 {
        0.0
    } else {
        ev[1] / ev[2]
    }
}

/// Least-squares rotation + translation mapping `from` points onto `to`
/// points via SVD of the cross-covariance, with reflection correction.
/// Needs at least 3 non-collinear pairs.
pub fn kabsch(from: &[Vec3], to: &[Vec3]) -> Result<RigidTransform> {
    if from.len() != to.len() {
        return Err(Error::InvalidInput(format!(
            "kabsch needs matched slices: {} vs {}",
            from.len(),
            to.len()
        )));
    }
    if from.len() < 3 {
        return Err(Error::InvalidInput(format!(
            "kabsch needs at least 3 pairs, got {}",
            from.len()
        )));
    }
    const COLLINEAR_RATIO: f64 = 1e-16;
    if planarity_ratio(from) < COLLINEAR_RATIO || planarity_ratio(to) < COLLINEAR_RATIO {
        return Err(Error::InvalidInput(
            "kabsch input points are collinear".into(),
        ));
    }
    let n = from.len() as f64;
    let mut mu_f = Vec3::zeros();
    let mut mu_t = Vec3::zeros();
    for (f, t) in from.iter().zip(to) {
        mu_f += f;
        mu_t += t;
    }
    mu_f /= n;
    mu_t /= n;
    let mut h = Matrix3::zeros();
    for (f, t) in from.iter().zip(to) {
        h += (f - mu_f) * (t - mu_t).transpose();
    }
    let svd = SVD::new(h, true, true);
    let u = svd.u.ok_or_else(|| Error::Internal("svd failed".into()))?;
    let v = svd
        .v_t
        .ok_or_else(|| Error::Internal("svd failed".into()))?
        .transpose();
    let d = (v * u.transpose()).determinant();
    let sign = if d < 0.0 { -1.0 } else { 1.0 };
    let rotation = v * Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, sign)) * u.transpose();
    let translation = mu_t - rotation * mu_f;
    RigidTransform::new(rotation, translation, 1.0)
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct RansacParams {
    pub iterations: usize,
    /// Inlier residual threshold in scene units.
    pub inlier_threshold: f64,
    pub seed: u64,
}

impl Default for RansacParams {
    fn default() -> Self {
        Self {
            iterations: 1000,
            inlier_threshold: 0.05,
            seed: 0,
        }
    }
}

struct RansacCandidate {
    inliers: Vec<usize>,
    rms: f64,
    iteration: usize,
    transform: RigidTransform,
}

/// RANSAC over correspondence pairs `(moving, fixed)`: fits a rigid
/// transform T with `T(moving) ≈ fixed`, keeping the largest inlier set
/// (ties: lower RMS, then lower iteration index), then refits on all
/// inliers. Deterministic per seed; iterations run in parallel with
/// per-iteration RNG streams.
pub fn ransac_align(
    pairs: &[(Vec3, Vec3)],
    params: &RansacParams,
) -> Result<(RigidTransform, Vec<usize>)> {
    if pairs.len() < 3 {
        return Err(Error::InvalidInput(format!(
            "RANSAC needs at least 3 correspondences, got {}",
            pairs.len()
        )));
    }
    if params.iterations == 0 || !(params.inlier_threshold > 0.0) {
        return Err(Error::Config(
            "RANSAC needs iterations >= 1 and a positive inlier threshold".into(),
        ));
    }
    let evaluate = |t: &RigidTransform| -> (Vec<usize>, f64) {
        let mut inliers = Vec::new();
        let mut sq_sum = 0.0;
        for (k, (moving, fixed)) in pairs.iter().enumerate() {
            let r = (t.apply_point(moving) - fixed).norm();
            if r <= params.inlier_threshold {
                inliers.push(k);
                sq_sum += r * r;
            }
        }
        let rms = if inliers.is_empty() {
            f64::INFINITY
        } else {
            (sq_sum / inliers.len() as f64).sqrt()
        };
        (inliers, rms)
    };

    let best = (0..params.iterations)
        .into_par_iter()
        .filter_map(|iteration| {
            let mut rng = stream_rng(params.seed, iteration as u64);
            let mut ids = [0usize; 3];
            ids[0] = rng.random_range(0..pairs.len());
            loop {
                ids[1] = rng.random_range(0..pairs.len());
                if ids[1] != ids[0] {
                    break;
                }
            }
            loop {
                ids[2] = rng.random_range(0..pairs.len());
                if ids[2] != ids[0] && ids[2] != ids[1] {
                    break;
                }
            }
            let from: Vec<Vec3> = ids.iter().map(|&k| pairs[k].0).collect();
            let to: Vec<Vec3> = ids.iter().map(|&k| pairs[k].1).collect();
            let t = kabsch(&from, &to).ok()?;
            let (inliers, rms) = evaluate(&t);
            if inliers.len() < 3 {
                return None;
            }
            Some(RansacCandidate {
                inliers,
                rms,
                iteration,
                transform: t,
            })
        })
        .reduce_with(|a, b| {
            // Deterministic winner regardless of reduction grouping: max
            // inliers, then min RMS, then lowest iteration index.
            let better_b = b.inliers.len() > a.inliers.len()
                || (b.inliers.len() == a.inliers.len()
                    && (b.rms < a.rms || (b.rms == a.rms && b.iteration < a.iteration)));
            if better_b {
                b
            } else {
                a
            }
        });

    let Some(best) = best else {
        return Err(Error::InvalidInput(
            "RANSAC found no valid model (all samples degenerate)".into(),
        ));
    };
    // Refit on the winning inlier set; fall back to the iteration model if
    // the inliers turn out degenerate.
    let from: Vec<Vec3> = best.inliers.iter().map(|&k| pairs[k].0).collect();
    let to: Vec<Vec3> = best.inliers.iter().map(|&k| pairs[k].1).collect();
    let refit = kabsch(&from, &to).unwrap_or(best.transform);
    Ok((refit, best.inliers))
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct RegisterParams {
    /// Neighborhood size for normal/curvature estimation.
    pub feature_k: usize,
    pub segmentation: SegmentationParams,
    /// TDF truncation in voxel sizes; grid dim comes from the net config.
    pub truncation_voxels: f64,
    pub ransac: RansacParams,
    /// Overlap-ratio distance threshold for the result report.
    pub overlap_threshold: f64,
}

impl Default for RegisterParams {
    fn default() -> Self {
        Self {
            feature_k: 16,
            segmentation: SegmentationParams::default(),
            truncation_voxels: 3.0,
            ransac: RansacParams::default(),
            overlap_threshold: 0.05,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RegistrationResult {
    /// Maps target-cloud coordinates into the source frame (scale folded in).
    pub transform: RigidTransform,
    pub correspondences: Vec<Correspondence>,
    pub inliers: Vec<usize>,
    pub overlap: OverlapReport,
    pub scale_factor: f64,
    pub source_control_points: usize,
    pub target_control_points: usize,
}

/// Fill descriptors on control points by voxelizing each segment and
/// running the network; parallel across segments, order-preserving.
pub fn describe_control_points(
    cloud: &PointCloud,
    cps: &mut [ControlPoint],
    weights: &NetWeights,
    truncation_voxels: f64,
) -> Result<()> {
    let dim = weights.config.input_dim;
    let descriptors: Result<Vec<_>> = cps
        .par_iter()
        .map(|cp| {
            let patch = cp.segment.materialize(cloud);
            let grid = voxelize_tdf(&patch, dim, truncation_voxels)?;
            forward(weights, &grid)
        })
        .collect();
    for (cp, d) in cps.iter_mut().zip(descriptors?) {
        cp.descriptor = Some(d);
    }
    Ok(())
}

/// Full pipeline: normalize scale, segment both clouds, describe control
/// points, match mutually, RANSAC-align, and report the overlap of the
/// aligned pair.
pub fn register(
    source: &PointCloud,
    target: &PointCloud,
    weights: &NetWeights,
    params: &RegisterParams,
) -> Result<RegistrationResult> {
    let (target_scaled, scale_factor) =
        normalize_scale(source, target).map_err(|e| e.stage("scale normalization"))?;

    let (source_f, _) =
        point_features(source, params.feature_k).map_err(|e| e.stage("source features"))?;
    let (target_f, _) =
        point_features(&target_scaled, params.feature_k).map_err(|e| e.stage("target features"))?;

    let mut cps_source = extract_control_points(&source_f, &params.segmentation)
        .map_err(|e| e.stage("source segmentation"))?;
    let mut cps_target = extract_control_points(&target_f, &params.segmentation)
        .map_err(|e| e.stage("target segmentation"))?;

    describe_control_points(&source_f, &mut cps_source, weights, params.truncation_voxels)
        .map_err(|e| e.stage("source description"))?;
    describe_control_points(&target_f, &mut cps_target, weights, params.truncation_voxels)
        .map_err(|e| e.stage("target description"))?;

    let correspondences =
        match_descriptors(&cps_source, &cps_target).map_err(|e| e.stage("matching"))?;

    let pairs: Vec<(Vec3, Vec3)> = correspondences
        .iter()
        .map(|c| (cps_target[c.target].position, cps_source[c.source].position))
        .collect();
    let (rigid, inliers) =
        ransac_align(&pairs, &params.ransac).map_err(|e| e.stage("ransac"))?;

    // Fold the scale normalization into the final target -> source map.
    let rescale = RigidTransform::scaling_about(
        scale_factor,
        target.bounding_sphere().map_err(|e| e.stage("scale normalization"))?.center,
    )?;
    let transform = rigid.compose(&rescale);

    let aligned = transform.apply_cloud(target);
    let overlap = overlap_ratio(&aligned, source, params.overlap_threshold)
        .map_err(|e| e.stage("overlap"))?;

    Ok(RegistrationResult {
        transform,
        correspondences,
        inliers,
        overlap,
        scale_factor,
        source_control_points: cps_source.len(),
        target_control_points: cps_target.len(),
    })
}
