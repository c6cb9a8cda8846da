//! Rigid transforms with optional uniform scale.

use nalgebra::{Matrix3, Matrix4, Rotation3, Unit};

use crate::cloud::{PointCloud, Vec3};
use crate::{Error, Result};

/// Tolerance for rotation orthonormality / determinant checks.
pub const ROTATION_TOL: f64 = 1e-9;

/// Similarity transform `p -> scale * rotation * p + translation`.
///
/// Scale is folded in as a uniform scalar because registration normalizes
/// scale before rigid estimation; pure rigid transforms have `scale == 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidTransform {
    rotation: Matrix3<f64>,
    translation: Vec3,
    scale: f64,
}

impl Default for RigidTransform {
    fn default() -> Self {
        Self::identity()
    }
}

impl RigidTransform {
    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vec3::zeros(),
            scale: 1.0,
        }
    }

    /// Validating constructor: rotation must be orthonormal with det +1
    /// within [`ROTATION_TOL`], scale strictly positive.
    pub fn new(rotation: Matrix3<f64>, translation: Vec3, scale: f64) -> Result<Self> {
        let gram = rotation.transpose() * rotation;
        let ortho_err = (gram - Matrix3::identity()).abs().max();
        if ortho_err > ROTATION_TOL {
            return Err(Error::InvalidInput(format!(
                "rotation is not orthonormal (error {ortho_err:.3e})"
            )));
        }
        let det = rotation.determinant();
        if (det - 1.0).abs() > ROTATION_TOL {
            return Err(Error::InvalidInput(format!(
                "rotation determinant {det} is not +1"
            )));
        }
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(Error::InvalidInput(format!("scale {scale} must be > 0")));
        }
        if !translation.iter().all(|c| c.is_finite()) {
            return Err(Error::InvalidInput("non-finite translation".into()));
        }
        Ok(Self {
            rotation,
            translation,
            scale,
        })
    }

    pub fn from_axis_angle(axis: Vec3, angle_rad: f64) -> Result<Self> {
        let norm = axis.norm();
        if norm < 1e-12 {
            return Err(Error::InvalidInput("zero-length rotation axis".into()));
        }
        let rot = Rotation3::from_axis_angle(&Unit::new_normalize(axis), angle_rad);
        Self::new(*rot.matrix(), Vec3::zeros(), 1.0)
    }

    /// Rotation of `angle_rad` about an axis through `center`.
    pub fn rotation_about(axis: Vec3, angle_rad: f64, center: Vec3) -> Result<Self> {
        let r = Self::from_axis_angle(axis, angle_rad)?;
        let translation = center - r.rotation * center;
        Self::new(r.rotation, translation, 1.0)
    }

    pub fn translation_only(t: Vec3) -> Result<Self> {
        Self::new(Matrix3::identity(), t, 1.0)
    }

    /// Uniform scaling by `factor` about `center`.
    pub fn scaling_about(factor: f64, center: Vec3) -> Result<Self> {
        Self::new(Matrix3::identity(), center * (1.0 - factor), factor)
    }

    pub fn with_translation(mut self, t: Vec3) -> Result<Self> {
        if !t.iter().all(|c| c.is_finite()) {
            return Err(Error::InvalidInput("non-finite translation".into()));
        }
        self.translation = t;
        Ok(self)
    }

    pub fn with_scale(mut self, scale: f64) -> Result<Self> {
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(Error::InvalidInput(format!("scale {scale} must be > 0")));
        }
        self.scale = scale;
        Ok(self)
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> Vec3 {
        self.translation
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn apply_point(&self, p: &Vec3) -> Vec3 {
        self.scale * (self.rotation * p) + self.translation
    }

    /// Transform every point; normals are rotated only, curvature carried.
    pub fn apply_cloud(&self, cloud: &PointCloud) -> PointCloud {
        let points = cloud.points().iter().map(|p| self.apply_point(p)).collect();
        let mut out = PointCloud::from_points(points)
            .expect("finite transform of finite points stays finite");
        if let Some(normals) = cloud.normals() {
            let rotated: Vec<Vec3> = normals.iter().map(|n| self.rotation * n).collect();
            out = out
                .with_normals(rotated)
                .expect("rotation preserves unit normals");
        }
        if let Some(curv) = cloud.curvatures() {
            out = out
                .with_curvatures(curv.to_vec())
                .expect("curvature carried unchanged");
        }
        out
    }

    pub fn inverse(&self) -> Self {
        let rot_inv = self.rotation.transpose();
        let s_inv = 1.0 / self.scale;
        Self {
            rotation: rot_inv,
            translation: -s_inv * (rot_inv * self.translation),
            scale: s_inv,
        }
    }

    /// Composition `self ∘ inner`: applies `inner` first.
    pub fn compose(&self, inner: &Self) -> Self {
        Self {
            rotation: self.rotation * inner.rotation,
            translation: self.scale * (self.rotation * inner.translation) + self.translation,
            scale: self.scale * inner.scale,
        }
    }

    /// Rotation angle in radians, from the trace.
    pub fn rotation_angle(&self) -> f64 {
        let c = ((self.rotation.trace() - 1.0) / 2.0).clamp(-1.0, 1.0);
        c.acos()
    }

    /// Homogeneous 4x4 matrix with scale folded into the linear block.
    pub fn to_matrix(&self) -> Matrix4<f64> {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0)
            .copy_from(&(self.scale * self.rotation));
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.translation);
        m
    }

    /// Recover (rotation, translation, scale) from a homogeneous matrix.
    pub fn from_matrix(m: &Matrix4<f64>) -> Result<Self> {
        let bottom = [m[(3, 0)], m[(3, 1)], m[(3, 2)], m[(3, 3)]];
        let expected = [0.0, 0.0, 0.0, 1.0];
        for (a, b) in bottom.iter().zip(expected) {
            if (a - b).abs() > ROTATION_TOL {
                return Err(Error::InvalidInput(
                    "bottom row of transform matrix is not [0 0 0 1]".into(),
                ));
            }
        }
        let linear: Matrix3<f64> = m.fixed_view::<3, 3>(0, 0).into();
        let det = linear.determinant();
        if det <= 0.0 || !det.is_finite() {
            return Err(Error::InvalidInput(format!(
                "transform linear part has non-positive determinant {det}"
            )));
        }
        let scale = det.cbrt();
        let rotation = linear / scale;
        let translation = Vec3::new(m[(0, 3)], m[(1, 3)], m[(2, 3)]);
        Self::new(rotation, translation, scale)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn sample_cloud() -> PointCloud {
        PointCloud::from_points(vec![
            Vec3::new(1.0, 0.0, 0.0),
            Vec3::new(0.0, 1.0, 0.0),
            Vec3::new(0.25, -0.5, 2.0),
        ])
        .unwrap()
    }

    #[test]
    fn identity_is_bitwise_noop() {
        let c = sample_cloud();
        assert_eq!(RigidTransform::identity().apply_cloud(&c), c);
    }

    #[test]
    fn half_turn_about_z() {
        let t = RigidTransform::from_axis_angle(Vec3::z(), std::f64::consts::PI).unwrap();
        let p = t.apply_point(&Vec3::new(1.0, 0.0, 0.0));
        assert_relative_eq!(p.x, -1.0, epsilon = 1e-12);
        assert_relative_eq!(p.y, 0.0, epsilon = 1e-12);
        assert_relative_eq!(p.z, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn inverse_round_trip() {
        let t = RigidTransform::from_axis_angle(Vec3::new(1.0, 2.0, -0.5), 0.83)
            .unwrap()
            .with_translation(Vec3::new(0.4, -1.1, 2.2))
            .unwrap()
            .with_scale(1.7)
            .unwrap();
        let inv = t.inverse();
        for p in sample_cloud().points() {
            let back = inv.apply_point(&t.apply_point(p));
            assert!((back - p).norm() < 1e-9);
        }
    }

    #[test]
    fn matrix_round_trip() {
        let t = RigidTransform::from_axis_angle(Vec3::new(0.3, -1.0, 0.7), 1.2)
            .unwrap()
            .with_translation(Vec3::new(5.0, 6.0, 7.0))
            .unwrap()
            .with_scale(0.35)
            .unwrap();
        let back = RigidTransform::from_matrix(&t.to_matrix()).unwrap();
        assert!((back.rotation() - t.rotation()).abs().max() < 1e-12);
        assert!((back.translation() - t.translation()).norm() < 1e-12);
        assert_relative_eq!(back.scale(), t.scale(), epsilon = 1e-12);
    }

    #[test]
    fn invalid_rotation_rejected() {
        let mut m = Matrix3::identity();
        m[(0, 0)] = 2.0;
        assert!(RigidTransform::new(m, Vec3::zeros(), 1.0).is_err());
        // Reflection: orthonormal but det -1.
        let refl = Matrix3::from_diagonal(&Vec3::new(1.0, 1.0, -1.0));
        assert!(RigidTransform::new(refl, Vec3::zeros(), 1.0).is_err());
        assert!(RigidTransform::identity().with_scale(0.0).is_err());
    }

    #[test]
    fn scale_one_preserves_pairwise_distances() {
        let t = RigidTransform::from_axis_angle(Vec3::new(-0.2, 0.9, 0.4), 2.4)
            .unwrap()
            .with_translation(Vec3::new(10.0, -3.0, 0.5))
            .unwrap();
        let c = sample_cloud();
        let tc = t.apply_cloud(&c);
        for i in 0..c.len() {
            for j in (i + 1)..c.len() {
                let before = (c.point(i) - c.point(j)).norm();
                let after = (tc.point(i) - tc.point(j)).norm();
                assert_relative_eq!(before, after, epsilon = 1e-9);
            }
        }
    }
}
