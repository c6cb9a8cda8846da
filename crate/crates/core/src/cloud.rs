//! Point cloud container and bounding sphere.

use nalgebra::Vector3;

use crate::{Error, Result};

/// 3D vector / point in scene units.
pub type Vec3 = Vector3<f64>;

/// Maximum deviation from unit length tolerated for stored normals.
pub const NORMAL_TOL: f64 = 1e-6;

/// Ordered list of 3D points with optional per-point normals and curvature.
///
/// Invariants: all coordinates finite; normals (when present) are unit
/// length within [`NORMAL_TOL`]; curvature (when present) is finite and
/// non-negative. Immutable after construction.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PointCloud {
    points: Vec<Vec3>,
    normals: Option<Vec<Vec3>>,
    curvatures: Option<Vec<f64>>,
}

impl PointCloud {
    /// Empty cloud (valid; most operations state their own minimum counts).
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_points(points: Vec<Vec3>) -> Result<Self> {
        for (i, p) in points.iter().enumerate() {
            if !(p.x.is_finite() && p.y.is_finite() && p.z.is_finite()) {
                return Err(Error::InvalidInput(format!(
                    "non-finite coordinate at point {i}"
                )));
            }
        }
        Ok(Self {
            points,
            normals: None,
            curvatures: None,
        })
    }

    pub fn with_normals(mut self, normals: Vec<Vec3>) -> Result<Self> {
        if normals.len() != self.points.len() {
            return Err(Error::InvalidInput(format!(
                "normal count {} does not match point count {}",
                normals.len(),
                self.points.len()
            )));
        }
        for (i, n) in normals.iter().enumerate() {
            if !n.iter().all(|c| c.is_finite()) || (n.norm() - 1.0).abs() > NORMAL_TOL {
                return Err(Error::InvalidInput(format!(
                    "normal at point {i} is not unit length"
                )));
            }
        }
        self.normals = Some(normals);
        Ok(self)
    }

    pub fn with_curvatures(mut self, curvatures: Vec<f64>) -> Result<Self> {
        if curvatures.len() != self.points.len() {
            return Err(Error::InvalidInput(format!(
                "curvature count {} does not match point count {}",
                curvatures.len(),
                self.points.len()
            )));
        }
        if let Some(i) = curvatures.iter().position(|c| !c.is_finite() || *c < 0.0) {
            return Err(Error::InvalidInput(format!(
                "curvature at point {i} is negative or non-finite"
            )));
        }
        self.curvatures = Some(curvatures);
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Vec3] {
        &self.points
    }

    pub fn point(&self, i: usize) -> Vec3 {
        self.points[i]
    }

    pub fn normals(&self) -> Option<&[Vec3]> {
        self.normals.as_deref()
    }

    pub fn curvatures(&self) -> Option<&[f64]> {
        self.curvatures.as_deref()
    }

    /// Drop normals and curvature, keeping only coordinates.
    pub fn coords_only(&self) -> PointCloud {
        PointCloud {
            points: self.points.clone(),
            normals: None,
            curvatures: None,
        }
    }

    /// Cloud restricted to the given point ids, attributes included.
    pub fn select(&self, ids: &[usize]) -> PointCloud {
        PointCloud {
            points: ids.iter().map(|&i| self.points[i]).collect(),
            normals: self
                .normals
                .as_ref()
                .map(|ns| ids.iter().map(|&i| ns[i]).collect()),
            curvatures: self
                .curvatures
                .as_ref()
                .map(|cs| ids.iter().map(|&i| cs[i]).collect()),
        }
    }

    pub fn centroid(&self) -> Result<Vec3> {
        if self.is_empty() {
            return Err(Error::InvalidInput("centroid of empty cloud".into()));
        }
        let mut sum = Vec3::zeros();
        for p in &self.points {
            sum += p;
        }
        Ok(sum / self.points.len() as f64)
    }

    /// Centroid-centered sphere of maximal point distance.
    pub fn bounding_sphere(&self) -> Result<BoundingSphere> {
        let center = self.centroid()?;
        let radius = self
            .points
            .iter()
            .map(|p| (p - center).norm())
            .fold(0.0, f64::max);
        Ok(BoundingSphere { center, radius })
    }

    /// Axis-aligned bounding box as (min, max) corners.
    pub fn bounding_box(&self) -> Result<(Vec3, Vec3)> {
        if self.is_empty() {
            return Err(Error::InvalidInput("bounding box of empty cloud".into()));
        }
        let mut lo = self.points[0];
        let mut hi = self.points[0];
        for p in &self.points[1..] {
            for k in 0..3 {
                lo[k] = lo[k].min(p[k]);
                hi[k] = hi[k].max(p[k]);
            }
        }
        Ok((lo, hi))
    }
}

/// Centroid-centered containing sphere.
///
/// Deliberately not the minimal enclosing sphere: centroid + max distance is
/// cheap, deterministic, and what the sampling bounds and shift percentages
/// are defined against.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundingSphere {
    pub center: Vec3,
    pub radius: f64,
}

impl BoundingSphere {
    pub fn contains(&self, p: &Vec3, tol: f64) -> bool {
        (p - self.center).norm() <= self.radius + tol
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_point_sphere_is_degenerate() {
        let c = PointCloud::from_points(vec![Vec3::new(1.0, 2.0, 3.0)]).unwrap();
        let s = c.bounding_sphere().unwrap();
        assert_eq!(s.center, Vec3::new(1.0, 2.0, 3.0));
        assert_eq!(s.radius, 0.0);
    }

    #[test]
    fn symmetric_pair_sphere() {
        let c = PointCloud::from_points(vec![Vec3::new(1.0, 0.0, 0.0), Vec3::new(-1.0, 0.0, 0.0)])
            .unwrap();
        let s = c.bounding_sphere().unwrap();
        assert_eq!(s.center, Vec3::zeros());
        assert_eq!(s.radius, 1.0);
    }

    #[test]
    fn unit_cube_corner_sphere() {
        let mut pts = Vec::new();
        for x in [0.0, 1.0] {
            for y in [0.0, 1.0] {
                for z in [0.0, 1.0] {
                    pts.push(Vec3::new(x, y, z));
                }
            }
        }
        let s = PointCloud::from_points(pts).unwrap().bounding_sphere().unwrap();
        assert!((s.center - Vec3::new(0.5, 0.5, 0.5)).norm() < 1e-12);
        assert!((s.radius - 0.75f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn empty_cloud_sphere_errors() {
        assert!(PointCloud::new().bounding_sphere().is_err());
    }

    #[test]
    fn non_finite_coordinates_rejected() {
        assert!(PointCloud::from_points(vec![Vec3::new(f64::NAN, 0.0, 0.0)]).is_err());
        assert!(PointCloud::from_points(vec![Vec3::new(0.0, f64::INFINITY, 0.0)]).is_err());
    }

    #[test]
    fn normal_validation() {
        let c = PointCloud::from_points(vec![Vec3::zeros()]).unwrap();
        assert!(c.clone().with_normals(vec![Vec3::new(0.0, 0.0, 1.0)]).is_ok());
        assert!(c.with_normals(vec![Vec3::new(0.0, 0.0, 0.5)]).is_err());
    }
}
