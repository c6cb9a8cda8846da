//! Per-point geometric features from local PCA.
//!
//! The normal is the smallest-eigenvalue eigenvector of the covariance of a
//! point's k-nearest neighborhood (the point itself plus its k nearest
//! neighbors), sign-canonicalized toward the +z hemisphere. Curvature is
//! the surface-variation ratio `l0 / (l0 + l1 + l2)` of the sorted
//! eigenvalues, which is 0 on planes and at most 1/3.

use nalgebra::{Matrix3, SymmetricEigen};
use rayon::prelude::*;

use crate::cloud::{PointCloud, Vec3};
use crate::index::SpatialIndex;
use crate::{Error, Result};

/// Ids of points whose neighborhood was degenerate (all points coincident);
/// these received curvature 0 and normal +z.
#[derive(Debug, Clone, Default)]
pub struct FeatureReport {
    pub degenerate: Vec<usize>,
}

/// Deterministic sign canonicalization: prefer +z, then +x, then +y.
fn canonical_sign(n: Vec3) -> Vec3 {
    if n.z < 0.0 || (n.z == 0.0 && (n.x < 0.0 || (n.x == 0.0 && n.y < 0.0))) {
        -n
    } else {
        n
    }
}

/// Compute normals and curvature over `k`-nearest neighborhoods.
///
/// Requires `k >= 3` and at least `k + 1` points. Returns the annotated
/// cloud plus a report of degenerate neighborhoods.
pub fn point_features(cloud: &PointCloud, k: usize) -> Result<(PointCloud, FeatureReport)> {
    if k < 3 {
        return Err(Error::InvalidInput(format!(
            "feature neighborhood k={k} must be at least 3"
        )));
    }
    if cloud.len() < k + 1 {
        return Err(Error::InvalidInput(format!(
            "cloud has {} points but k={k} needs at least {}",
            cloud.len(),
            k + 1
        )));
    }
    let index = SpatialIndex::build(cloud)?;
    let per_point: Vec<(Vec3, f64, bool)> = (0..cloud.len())
        .into_par_iter()
        .map(|i| point_feature(cloud, &index, i, k))
        .collect();

    let mut normals = Vec::with_capacity(cloud.len());
    let mut curvatures = Vec::with_capacity(cloud.len());
    let mut report = FeatureReport::default();
    for (i, (n, c, degenerate)) in per_point.into_iter().enumerate() {
        normals.push(n);
        curvatures.push(c);
        if degenerate {
            report.degenerate.push(i);
        }
    }
    let out = cloud
        .coords_only()
        .with_normals(normals)?
        .with_curvatures(curvatures)?;
    Ok((out, report))
}

fn point_feature(cloud: &PointCloud, index: &SpatialIndex, i: usize, k: usize) -> (Vec3, f64, bool) {
    let p = cloud.point(i);
    let neighborhood = index.k_nearest(&p, k + 1);
    // Degenerate: the whole neighborhood collapses onto one location.
    if neighborhood.iter().all(|&(j, _)| cloud.point(j) == p) {
        return (Vec3::z(), 0.0, true);
    }
    let mut mean = Vec3::zeros();
    for &(j, _) in &neighborhood {
        mean += cloud.point(j);
    }
    mean /= neighborhood.len() as f64;
    let mut cov = Matrix3::zeros();
    for &(j, _) in &neighborhood {
        let d = cloud.point(j) - mean;
        cov += d * d.transpose();
    }
    cov /= neighborhood.len() as f64;

    let eig = SymmetricEigen::new(cov);
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| {
        eig.eigenvalues[a]
            .partial_cmp(&eig.eigenvalues[b])
            .expect("finite eigenvalues")
    });
    let lambda: Vec<f64> = order.iter().map(|&j| eig.eigenvalues[j].max(0.0)).collect();
    let total: f64 = lambda.iter().sum();
    if total <= 0.0 {
        return (Vec3::z(), 0.0, true);
    }
    let normal_raw: Vec3 = eig.eigenvectors.column(order[0]).into();
    let normal = canonical_sign(normal_raw.normalize());
    let curvature = (lambda[0] / total).clamp(0.0, 1.0);
    (normal, curvature, false)
}

/// Weighted feature distance between two points used for region clustering:
/// Euclidean over (curvature difference, unsigned normal angle).
pub fn feature_distance(
    normal_a: &Vec3,
    curv_a: f64,
    normal_b: &Vec3,
    curv_b: f64,
    curvature_weight: f64,
    normal_weight: f64,
) -> f64 {
    let dc = curvature_weight * (curv_a - curv_b);
    // Unsigned angle so hemisphere canonicalization flips do not split
    // otherwise coherent surfaces.
    let angle = normal_a.dot(normal_b).abs().clamp(0.0, 1.0).acos();
    let dn = normal_weight * angle;
    (dc * dc + dn * dn).sqrt()
}
