//! Synthetic scene generation and cross-source degradation.
//!
//! Scenes are unions of primitive surfaces sampled uniformly by area, with
//! analytic normals. Cross-source pairs are produced by degrading one scene
//! twice with different profiles; the degradation stages run in a fixed
//! order (density -> occlusion -> noise -> outliers -> transform) so each
//! stage's effect is independently testable.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal, UnitBall, UnitSphere};
use serde::{Deserialize, Serialize};

use crate::cloud::{PointCloud, Vec3};
use crate::seed::stream_rng;
use crate::transform::RigidTransform;
use crate::{Error, Result};

/// Pose given as axis-angle rotation plus translation; identity by default.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct PoseSpec {
    pub translation: [f64; 3],
    pub rotation_axis: [f64; 3],
    pub rotation_deg: f64,
}

impl Default for PoseSpec {
    fn default() -> Self {
        Self {
            translation: [0.0; 3],
            rotation_axis: [0.0, 0.0, 1.0],
            rotation_deg: 0.0,
        }
    }
}

impl PoseSpec {
    pub fn to_transform(&self) -> Result<RigidTransform> {
        let axis = Vec3::from(self.rotation_axis);
        let t = Vec3::from(self.translation);
        if self.rotation_deg == 0.0 {
            RigidTransform::translation_only(t)
        } else {
            RigidTransform::from_axis_angle(axis, self.rotation_deg.to_radians())?
                .with_translation(t)
        }
    }
}

/// Similarity transform spec: pose plus uniform scale.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct TransformSpec {
    #[serde(flatten)]
    pub pose: PoseSpec,
    pub scale: f64,
}

impl Default for TransformSpec {
    fn default() -> Self {
        Self {
            pose: PoseSpec::default(),
            scale: 1.0,
        }
    }
}

impl TransformSpec {
    pub fn to_transform(&self) -> Result<RigidTransform> {
        self.pose.to_transform()?.with_scale(self.scale)
    }
}

/// One surface primitive with a target sample count.
///
/// `kind` is one of `plane`, `cuboid`, `sphere`, `cylinder`; `extent` holds
/// `[width, depth]`, `[sx, sy, sz]`, `[radius]`, `[radius, height]`
/// respectively.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct PlacedPrimitive {
    pub kind: String,
    pub extent: Vec<f64>,
    pub points: usize,
    #[serde(default)]
    pub pose: PoseSpec,
}

/// Full scene description; deterministic for a fixed seed.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SceneSpec {
    pub seed: u64,
    pub primitives: Vec<PlacedPrimitive>,
}

enum Shape {
    Plane { width: f64, depth: f64 },
    Cuboid { size: [f64; 3] },
    Sphere { radius: f64 },
    Cylinder { radius: f64, height: f64 },
}

fn parse_primitive(p: &PlacedPrimitive, idx: usize) -> Result<Shape> {
    let bad_extent = |want: usize| {
        Error::Config(format!(
            "primitive {idx} ({}): expected {want} extent value(s), found {}",
            p.kind,
            p.extent.len()
        ))
    };
    if p.extent.iter().any(|e| !(*e > 0.0 && e.is_finite())) {
        return Err(Error::Config(format!(
            "primitive {idx} ({}): extents must be positive",
            p.kind
        )));
    }
    match p.kind.as_str() {
        "plane" => match p.extent[..] {
            [width, depth] => Ok(Shape::Plane { width, depth }),
            _ => Err(bad_extent(2)),
        },
        "cuboid" => match p.extent[..] {
            [sx, sy, sz] => Ok(Shape::Cuboid { size: [sx, sy, sz] }),
            _ => Err(bad_extent(3)),
        },
        "sphere" => match p.extent[..] {
            [radius] => Ok(Shape::Sphere { radius }),
            _ => Err(bad_extent(1)),
        },
        "cylinder" => match p.extent[..] {
            [radius, height] => Ok(Shape::Cylinder { radius, height }),
            _ => Err(bad_extent(2)),
        },
        other => Err(Error::Config(format!(
            "primitive {idx}: unknown primitive kind '{other}'"
        ))),
    }
}

/// Sample `spec` into a cloud with analytic surface normals.
pub fn generate_scene(spec: &SceneSpec) -> Result<PointCloud> {
    if spec.primitives.is_empty() || spec.primitives.iter().map(|p| p.points).sum::<usize>() == 0 {
        return Err(Error::Config("scene has no points to generate".into()));
    }
    let mut points = Vec::new();
    let mut normals = Vec::new();
    for (idx, prim) in spec.primitives.iter().enumerate() {
        let shape = parse_primitive(prim, idx)?;
        let pose = prim.pose.to_transform()?;
        let mut rng = stream_rng(spec.seed, idx as u64);
        for _ in 0..prim.points {
            let (p, n) = sample_surface(&shape, &mut rng);
            points.push(pose.apply_point(&p));
            normals.push(pose.rotation() * n);
        }
    }
    PointCloud::from_points(points)?.with_normals(normals)
}

fn sample_surface<R: Rng>(shape: &Shape, rng: &mut R) -> (Vec3, Vec3) {
    match shape {
        Shape::Plane { width, depth } => {
            let x = rng.random_range(-width / 2.0..=width / 2.0);
            let y = rng.random_range(-depth / 2.0..=depth / 2.0);
            (Vec3::new(x, y, 0.0), Vec3::z())
        }
        Shape::Cuboid { size } => {
            let [sx, sy, sz] = *size;
            let areas = [sy * sz, sy * sz, sx * sz, sx * sz, sx * sy, sx * sy];
            let total: f64 = areas.iter().sum();
            let mut pick = rng.random_range(0.0..total);
            let mut face = 0;
            for (i, a) in areas.iter().enumerate() {
                if pick < *a {
                    face = i;
                    break;
                }
                pick -= a;
            }
            let u = rng.random_range(-0.5..=0.5);
            let v = rng.random_range(-0.5..=0.5);
            match face {
                0 => (Vec3::new(sx / 2.0, u * sy, v * sz), Vec3::x()),
                1 => (Vec3::new(-sx / 2.0, u * sy, v * sz), -Vec3::x()),
                2 => (Vec3::new(u * sx, sy / 2.0, v * sz), Vec3::y()),
                3 => (Vec3::new(u * sx, -sy / 2.0, v * sz), -Vec3::y()),
                4 => (Vec3::new(u * sx, v * sy, sz / 2.0), Vec3::z()),
                _ => (Vec3::new(u * sx, v * sy, -sz / 2.0), -Vec3::z()),
            }
        }
        Shape::Sphere { radius } => {
            let dir: [f64; 3] = UnitSphere.sample(rng);
            let n = Vec3::from(dir);
            (*radius * n, n)
        }
        Shape::Cylinder { radius, height } => {
            let lateral = 2.0 * std::f64::consts::PI * radius * height;
            let caps = 2.0 * std::f64::consts::PI * radius * radius;
            if rng.random_range(0.0..lateral + caps) < lateral {
                let theta = rng.random_range(0.0..std::f64::consts::TAU);
                let z = rng.random_range(-height / 2.0..=height / 2.0);
                let n = Vec3::new(theta.cos(), theta.sin(), 0.0);
                (Vec3::new(radius * n.x, radius * n.y, z), n)
            } else {
                let theta = rng.random_range(0.0..std::f64::consts::TAU);
                let r = radius * rng.random_range(0.0f64..=1.0).sqrt();
                let top = rng.random_range(0.0..1.0) < 0.5;
                let z = if top { height / 2.0 } else { -height / 2.0 };
                let n = if top { Vec3::z() } else { -Vec3::z() };
                (Vec3::new(r * theta.cos(), r * theta.sin(), z), n)
            }
        }
    }
}

/// Sensor-style degradation: density subsampling, half-space occlusion cuts,
/// Gaussian coordinate noise, uniform outliers, then a similarity transform.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct DegradationProfile {
    /// Fraction of points kept by density subsampling, in (0, 1].
    pub keep_fraction: f64,
    /// Number of half-space occlusion cuts.
    pub occlusion_cuts: usize,
    /// Per-cut cap on the fraction of current points removed, in [0, 1).
    pub occlusion_max_fraction: f64,
    /// Per-coordinate Gaussian noise sigma, scene units.
    pub noise_sigma: f64,
    /// Outliers added relative to the current point count, >= 0.
    pub outlier_fraction: f64,
    /// Rigid + scale transform applied last.
    pub transform: TransformSpec,
}

impl Default for DegradationProfile {
    fn default() -> Self {
        Self {
            keep_fraction: 1.0,
            occlusion_cuts: 0,
            occlusion_max_fraction: 0.3,
            noise_sigma: 0.0,
            outlier_fraction: 0.0,
            transform: TransformSpec::default(),
        }
    }
}

impl DegradationProfile {
    pub fn identity() -> Self {
        Self::default()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.keep_fraction > 0.0 && self.keep_fraction <= 1.0) {
            return Err(Error::Config(format!(
                "keep_fraction {} must be in (0, 1]",
                self.keep_fraction
            )));
        }
        if !(0.0..1.0).contains(&self.occlusion_max_fraction) {
            return Err(Error::Config(format!(
                "occlusion_max_fraction {} must be in [0, 1)",
                self.occlusion_max_fraction
            )));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::Config("noise_sigma must be >= 0".into()));
        }
        if !(self.outlier_fraction >= 0.0 && self.outlier_fraction.is_finite()) {
            return Err(Error::Config("outlier_fraction must be >= 0".into()));
        }
        self.transform.to_transform().map(|_| ())
    }
}

/// Pick `m` distinct indices out of `n`, returned in ascending order.
fn sample_indices<R: Rng>(n: usize, m: usize, rng: &mut R) -> Vec<usize> {
    let mut ids: Vec<usize> = (0..n).collect();
    for i in 0..m {
        let j = rng.random_range(i..n);
        ids.swap(i, j);
    }
    ids.truncate(m);
    ids.sort_unstable();
    ids
}

/// Apply `profile` to `cloud`; deterministic for a fixed seed. Stages that
/// are configured as no-ops are skipped entirely, so the identity profile
/// returns the input bit for bit.
pub fn degrade(cloud: &PointCloud, profile: &DegradationProfile, seed: u64) -> Result<PointCloud> {
    if cloud.is_empty() {
        return Err(Error::InvalidInput("cannot degrade an empty cloud".into()));
    }
    profile.validate()?;
    let mut current = cloud.clone();

    // Density subsampling: exact count, original order preserved.
    if profile.keep_fraction < 1.0 {
        let mut rng = stream_rng(seed, 0);
        let m = ((profile.keep_fraction * current.len() as f64).round() as usize)
            .clamp(1, current.len());
        let ids = sample_indices(current.len(), m, &mut rng);
        current = current.select(&ids);
    }

    // Occlusion: half-space cuts through a random on-surface anchor, each
    // removing at most the configured fraction (farthest points first).
    if profile.occlusion_cuts > 0 && profile.occlusion_max_fraction > 0.0 {
        let mut rng = stream_rng(seed, 1);
        for _ in 0..profile.occlusion_cuts {
            let anchor = current.point(rng.random_range(0..current.len()));
            let dir: [f64; 3] = UnitSphere.sample(&mut rng);
            let normal = Vec3::from(dir);
            let allowed = (profile.occlusion_max_fraction * current.len() as f64).floor() as usize;
            if allowed == 0 {
                continue;
            }
            let mut beyond: Vec<(f64, usize)> = current
                .points()
                .iter()
                .enumerate()
                .filter_map(|(i, p)| {
                    let s = normal.dot(&(p - anchor));
                    (s > 0.0).then_some((s, i))
                })
                .collect();
            beyond.sort_unstable_by(|a, b| {
                b.0.partial_cmp(&a.0).expect("finite").then(a.1.cmp(&b.1))
            });
            beyond.truncate(allowed);
            let removed: std::collections::HashSet<usize> =
                beyond.into_iter().map(|(_, i)| i).collect();
            let keep: Vec<usize> = (0..current.len()).filter(|i| !removed.contains(i)).collect();
            current = current.select(&keep);
        }
    }

    // Gaussian per-coordinate noise; normals left as-is.
    if profile.noise_sigma > 0.0 {
        let mut rng = stream_rng(seed, 2);
        let sigma = profile.noise_sigma;
        let points: Vec<Vec3> = current
            .points()
            .iter()
            .map(|p| {
                let nx: f64 = StandardNormal.sample(&mut rng);
                let ny: f64 = StandardNormal.sample(&mut rng);
                let nz: f64 = StandardNormal.sample(&mut rng);
                Vec3::new(p.x + sigma * nx, p.y + sigma * ny, p.z + sigma * nz)
            })
            .collect();
        let mut noised = PointCloud::from_points(points)?;
        if let Some(ns) = current.normals() {
            noised = noised.with_normals(ns.to_vec())?;
        }
        if let Some(cs) = current.curvatures() {
            noised = noised.with_curvatures(cs.to_vec())?;
        }
        current = noised;
    }

    // Outliers: uniform inside 1.2x the current bounding sphere, appended
    // after the surviving points.
    if profile.outlier_fraction > 0.0 {
        let mut rng = stream_rng(seed, 3);
        let m = (profile.outlier_fraction * current.len() as f64).round() as usize;
        if m > 0 {
            let sphere = current.bounding_sphere()?;
            let r = 1.2 * sphere.radius.max(1e-9);
            let mut points = current.points().to_vec();
            let mut extra_normals = Vec::with_capacity(m);
            for _ in 0..m {
                let u: [f64; 3] = UnitBall.sample(&mut rng);
                let p = sphere.center + r * Vec3::from(u);
                // Outliers get a plausible radial normal so the attribute
                // stays well-formed on clouds that carry normals.
                let dir = p - sphere.center;
                extra_normals.push(if dir.norm() > 1e-12 {
                    dir.normalize()
                } else {
                    Vec3::z()
                });
                points.push(p);
            }
            let mut with_outliers = PointCloud::from_points(points)?;
            if let Some(ns) = current.normals() {
                let mut normals = ns.to_vec();
                normals.extend(extra_normals);
                with_outliers = with_outliers.with_normals(normals)?;
            }
            if let Some(cs) = current.curvatures() {
                let mut curv = cs.to_vec();
                curv.extend(std::iter::repeat_n(0.0, m));
                with_outliers = with_outliers.with_curvatures(curv)?;
            }
            current = with_outliers;
        }
    }

    let transform = profile.transform.to_transform()?;
    if transform != RigidTransform::identity() {
        current = transform.apply_cloud(&current);
    }
    Ok(current)
}

/// Two differently degraded views of one scene plus the exact relative
/// transform mapping cloud A's frame onto cloud B's.
pub fn make_cross_source_pair(
    spec: &SceneSpec,
    profile_a: &DegradationProfile,
    profile_b: &DegradationProfile,
    seed_a: u64,
    seed_b: u64,
) -> Result<(PointCloud, PointCloud, RigidTransform)> {
    let scene = generate_scene(spec)?;
    let a = degrade(&scene, profile_a, seed_a)?;
    let b = degrade(&scene, profile_b, seed_b)?;
    let ta = profile_a.transform.to_transform()?;
    let tb = profile_b.transform.to_transform()?;
    Ok((a, b, tb.compose(&ta.inverse())))
}
