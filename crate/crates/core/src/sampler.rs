//! Region-based training pair sampling and rotation augmentation.
//!
//! Positive pairs are grown from a random seed point in PC1 by clustering
//! feature-similar neighbors under a random threshold; the grown region's
//! containing box is cropped from PC2, and the pair is kept only when both
//! sides hold more than 50 points. Each accepted positive spawns one
//! negative whose crop box center is displaced by a distance drawn from
//! [3r, max radius of PC2]. Rotation augmentation adds one copy per pair
//! with region B rotated by a random angle in [-90°, 90°].

use std::collections::VecDeque;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, UnitSphere};
use serde::{Deserialize, Serialize};

use crate::cloud::{BoundingSphere, PointCloud, Vec3};
use crate::error::io_err;
use crate::features::{feature_distance, point_features};
use crate::index::SpatialIndex;
use crate::seed::stream_rng;
use crate::{Error, Result};

/// A clustered point subset with its containing box and sphere.
#[derive(Debug, Clone, PartialEq)]
pub struct Region {
    /// Member point ids in the source cloud, ascending.
    pub members: Vec<usize>,
    /// Containing box; for grown regions the tight box of the members, for
    /// crops the crop box itself.
    pub box_min: Vec3,
    pub box_max: Vec3,
    /// Centroid-centered sphere of the member points.
    pub sphere: BoundingSphere,
    /// Which cloud the member ids refer to (0 = PC1, 1 = PC2).
    pub source_cloud: usize,
}

impl Region {
    /// Region over explicit member ids; box is the tight member box.
    pub fn from_members(cloud: &PointCloud, mut members: Vec<usize>, source: usize) -> Result<Self> {
        if members.is_empty() {
            return Err(Error::InvalidInput("region needs at least one member".into()));
        }
        members.sort_unstable();
        let sub = cloud.select(&members);
        let (box_min, box_max) = sub.bounding_box()?;
        let sphere = sub.bounding_sphere()?;
        Ok(Region {
            members,
            box_min,
            box_max,
            sphere,
            source_cloud: source,
        })
    }

    /// Crop of `cloud` by an explicit box (inclusive bounds). The stored box
    /// is the crop box, not the tight box. Returns `None` when no point
    /// falls inside.
    pub fn crop(cloud: &PointCloud, box_min: Vec3, box_max: Vec3, source: usize) -> Option<Region> {
        let members: Vec<usize> = cloud
            .points()
            .iter()
            .enumerate()
            .filter(|(_, p)| {
                (0..3).all(|k| p[k] >= box_min[k] && p[k] <= box_max[k])
            })
            .map(|(i, _)| i)
            .collect();
        if members.is_empty() {
            return None;
        }
        let sphere = cloud.select(&members).bounding_sphere().ok()?;
        Some(Region {
            members,
            box_min,
            box_max,
            sphere,
            source_cloud: source,
        })
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn box_center(&self) -> Vec3 {
        (self.box_min + self.box_max) / 2.0
    }

    pub fn box_extent(&self) -> Vec3 {
        self.box_max - self.box_min
    }

    /// Member coordinates as a standalone cloud.
    pub fn materialize(&self, cloud: &PointCloud) -> PointCloud {
        cloud.select(&self.members).coords_only()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairLabel {
    Positive,
    Negative,
}

impl PairLabel {
    pub fn is_positive(self) -> bool {
        matches!(self, PairLabel::Positive)
    }
}

/// One training sample: a region from PC1 paired with a region from PC2,
/// with materialized coordinates so augmented copies are self-contained.
#[derive(Debug, Clone)]
pub struct TrainingPair {
    pub region_a: Region,
    pub points_a: PointCloud,
    pub region_b: Region,
    pub points_b: PointCloud,
    pub label: PairLabel,
    /// Rotation augmentation angle in degrees, `None` for original samples.
    pub augment_angle_deg: Option<f64>,
    /// For negatives: the drawn displacement between the positive box center
    /// and this pair's crop box center.
    pub negative_displacement: Option<f64>,
}

/// Knobs for `sample_pairs`; defaults follow the desk-scale configuration.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct SampleConfig {
    pub n_pos: usize,
    pub n_neg: usize,
    /// Neighborhood size for feature computation.
    pub feature_k: usize,
    /// Neighbors per point in the region-growing graph.
    pub graph_k: usize,
    /// Clustering threshold is drawn uniformly from this range per candidate.
    pub threshold_min: f64,
    pub threshold_max: f64,
    pub curvature_weight: f64,
    pub normal_weight: f64,
    /// Minimum member count on both sides of a positive ("more than 50").
    pub min_region_points: usize,
    /// Attempts to place one negative before giving up on it.
    pub negative_retries: usize,
    /// Candidate budget as a multiple of max(n_pos, n_neg).
    pub attempt_factor: usize,
}

impl Default for SampleConfig {
    fn default() -> Self {
        Self {
            n_pos: 2000,
            n_neg: 2000,
            feature_k: 16,
            graph_k: 10,
            threshold_min: 0.02,
            threshold_max: 0.3,
            curvature_weight: 1.0,
            normal_weight: 0.5,
            min_region_points: 51,
            negative_retries: 100,
            attempt_factor: 100,
        }
    }
}

impl SampleConfig {
    pub fn validate(&self) -> Result<()> {
        if self.threshold_min < 0.0 || self.threshold_max < self.threshold_min {
            return Err(Error::Config(
                "threshold range must satisfy 0 <= min <= max".into(),
            ));
        }
        if self.min_region_points < 1 {
            return Err(Error::Config("min_region_points must be >= 1".into()));
        }
        if self.feature_k < 3 || self.graph_k < 1 {
            return Err(Error::Config("feature_k >= 3 and graph_k >= 1 required".into()));
        }
        Ok(())
    }
}

/// Counters describing how the sampling run went.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SampleWarnings {
    pub attempts_used: usize,
    /// Candidate regions discarded for too few points on either side.
    pub discarded_candidates: usize,
    /// Negative placements that ran out of retries (all crops empty).
    pub exhausted_negatives: usize,
    /// Positives whose 3r lower bound exceeded the PC2 max radius.
    pub impossible_negatives: usize,
}

#[derive(Debug)]
pub struct SampleOutcome {
    pub pairs: Vec<TrainingPair>,
    pub warnings: SampleWarnings,
    /// True when the attempt budget ran out before reaching the counts.
    pub partial: bool,
}

struct GrowContext<'a> {
    cloud: &'a PointCloud,
    knn: Vec<Vec<u32>>,
    curvature_weight: f64,
    normal_weight: f64,
}

impl<'a> GrowContext<'a> {
    fn build(cloud: &'a PointCloud, index: &SpatialIndex, graph_k: usize, cw: f64, nw: f64) -> Self {
        let knn: Vec<Vec<u32>> = cloud
            .points()
            .iter()
            .map(|p| {
                index
                    .k_nearest(p, graph_k + 1)
                    .into_iter()
                    .map(|(j, _)| j as u32)
                    .collect()
            })
            .collect();
        Self {
            cloud,
            knn,
            curvature_weight: cw,
            normal_weight: nw,
        }
    }

    fn feature_dist_to(&self, seed: usize, other: usize) -> f64 {
        let normals = self.cloud.normals().expect("features computed");
        let curv = self.cloud.curvatures().expect("features computed");
        feature_distance(
            &normals[other],
            curv[other],
            &normals[seed],
            curv[seed],
            self.curvature_weight,
            self.normal_weight,
        )
    }

    /// BFS over the k-NN graph admitting points whose feature distance to
    /// the seed is at most `threshold`.
    fn grow(&self, seed: usize, threshold: f64) -> Vec<usize> {
        let mut visited = vec![false; self.cloud.len()];
        let mut members = vec![seed];
        let mut queue = VecDeque::from([seed]);
        visited[seed] = true;
        while let Some(u) = queue.pop_front() {
            for &v in &self.knn[u] {
                let v = v as usize;
                if visited[v] {
                    continue;
                }
                if self.feature_dist_to(seed, v) <= threshold {
                    visited[v] = true;
                    members.push(v);
                    queue.push_back(v);
                }
            }
        }
        members
    }
}

/// Grow a feature-coherent region from `seed_id`; requires a cloud with
/// features computed (normals and curvature).
pub fn grow_region(
    cloud: &PointCloud,
    index: &SpatialIndex,
    cfg: &SampleConfig,
    seed_id: usize,
    threshold: f64,
) -> Result<Region> {
    if cloud.normals().is_none() || cloud.curvatures().is_none() {
        return Err(Error::InvalidInput(
            "grow_region requires features (run point_features first)".into(),
        ));
    }
    if seed_id >= cloud.len() {
        return Err(Error::InvalidInput(format!(
            "seed id {seed_id} out of range for cloud of {}",
            cloud.len()
        )));
    }
    let ctx = GrowContext::build(
        cloud,
        index,
        cfg.graph_k,
        cfg.curvature_weight,
        cfg.normal_weight,
    );
    Region::from_members(cloud, ctx.grow(seed_id, threshold), 0)
}

/// Sample positive and negative training pairs from a pre-aligned pair of
/// clouds (PC2 brought into PC1's frame by the known ground truth).
///
/// Deterministic for a fixed seed: candidate k consumes only its own derived
/// RNG stream.
pub fn sample_pairs(
    pc1: &PointCloud,
    pc2: &PointCloud,
    cfg: &SampleConfig,
    seed: u64,
) -> Result<SampleOutcome> {
    cfg.validate()?;
    if pc1.is_empty() || pc2.is_empty() {
        return Err(Error::InvalidInput("sampling needs two non-empty clouds".into()));
    }
    let pc1 = if pc1.normals().is_some() && pc1.curvatures().is_some() {
        pc1.clone()
    } else {
        point_features(pc1, cfg.feature_k)?.0
    };
    let index1 = SpatialIndex::build(&pc1)?;
    let ctx = GrowContext::build(
        &pc1,
        &index1,
        cfg.graph_k,
        cfg.curvature_weight,
        cfg.normal_weight,
    );
    let pc2_radius = pc2.bounding_sphere()?.radius;

    let mut pairs = Vec::with_capacity(cfg.n_pos + cfg.n_neg);
    let mut warnings = SampleWarnings::default();
    let mut pos = 0usize;
    let mut neg = 0usize;
    let budget = cfg.attempt_factor.saturating_mul(cfg.n_pos.max(cfg.n_neg).max(1));

    for attempt in 0..budget {
        if pos >= cfg.n_pos && neg >= cfg.n_neg {
            break;
        }
        warnings.attempts_used = attempt + 1;
        let mut rng = stream_rng(seed, attempt as u64);
        let seed_id = rng.random_range(0..pc1.len());
        let threshold = rng.random_range(cfg.threshold_min..=cfg.threshold_max);
        let members = ctx.grow(seed_id, threshold);
        if members.len() < cfg.min_region_points {
            warnings.discarded_candidates += 1;
            continue;
        }
        // Record the cluster's containing box; both sides of the pair are
        // crops of that box, so identical clouds give identical regions.
        let cluster = Region::from_members(&pc1, members, 0)?;
        let region_a = Region::crop(&pc1, cluster.box_min, cluster.box_max, 0)
            .expect("crop of a box built from members is non-empty");
        // Crop the same box from PC2; discard when the other side is too
        // sparse to carry the structure.
        let Some(region_b) = Region::crop(pc2, cluster.box_min, cluster.box_max, 1) else {
            warnings.discarded_candidates += 1;
            continue;
        };
        if region_b.len() < cfg.min_region_points {
            warnings.discarded_candidates += 1;
            continue;
        }

        if pos < cfg.n_pos {
            pairs.push(TrainingPair {
                points_a: region_a.materialize(&pc1),
                points_b: region_b.materialize(pc2),
                region_a: region_a.clone(),
                region_b,
                label: PairLabel::Positive,
                augment_angle_deg: None,
                negative_displacement: None,
            });
            pos += 1;
        }

        if neg < cfg.n_neg {
            let r = region_a.sphere.radius;
            let lo = 3.0 * r;
            if lo > pc2_radius {
                warnings.impossible_negatives += 1;
                continue;
            }
            let center = region_a.box_center();
            let half = region_a.box_extent() / 2.0;
            let mut placed = false;
            for _ in 0..cfg.negative_retries {
                let dir = Vec3::from(<[f64; 3]>::from(UnitSphere.sample(&mut rng)));
                let dist = rng.random_range(lo..=pc2_radius);
                let neg_center = center + dist * dir;
                if let Some(region_n) =
                    Region::crop(pc2, neg_center - half, neg_center + half, 1)
                {
                    pairs.push(TrainingPair {
                        points_a: region_a.materialize(&pc1),
                        points_b: region_n.materialize(pc2),
                        region_a: region_a.clone(),
                        region_b: region_n,
                        label: PairLabel::Negative,
                        augment_angle_deg: None,
                        negative_displacement: Some(dist),
                    });
                    neg += 1;
                    placed = true;
                    break;
                }
            }
            if !placed {
                warnings.exhausted_negatives += 1;
            }
        }
    }

    Ok(SampleOutcome {
        partial: pos < cfg.n_pos || neg < cfg.n_neg,
        pairs,
        warnings,
    })
}

/// Axis used for rotation augmentation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum AugmentAxis {
    /// Vertical axis; matches a single-angle rotation convention.
    #[default]
    Z,
    /// Uniformly random axis per pair (ablation option).
    Random,
}

/// Append one rotated copy per input pair: region B's points are rotated
/// about their centroid by an angle drawn uniformly from [-90°, 90°].
/// Labels are preserved, so n pairs become exactly 2n.
pub fn augment(pairs: &[TrainingPair], axis: AugmentAxis, seed: u64) -> Vec<TrainingPair> {
    let mut out = pairs.to_vec();
    out.reserve(pairs.len());
    for (i, pair) in pairs.iter().enumerate() {
        let mut rng = stream_rng(seed, i as u64);
        let angle_deg: f64 = rng.random_range(-90.0..=90.0);
        let axis_vec = match axis {
            AugmentAxis::Z => Vec3::z(),
            AugmentAxis::Random => Vec3::from(<[f64; 3]>::from(UnitSphere.sample(&mut rng))),
        };
        let center = pair.region_b.sphere.center;
        let rot = crate::transform::RigidTransform::rotation_about(
            axis_vec,
            angle_deg.to_radians(),
            center,
        )
        .expect("unit axis");
        let points_b = rot.apply_cloud(&pair.points_b);
        let region_b = Region::from_members(
            &points_b,
            (0..points_b.len()).collect(),
            pair.region_b.source_cloud,
        )
        .map(|mut r| {
            // Keep the original PC2 ids as provenance.
            r.members = pair.region_b.members.clone();
            r
        })
        .expect("non-empty region stays non-empty");
        out.push(TrainingPair {
            region_a: pair.region_a.clone(),
            points_a: pair.points_a.clone(),
            region_b,
            points_b,
            label: pair.label,
            augment_angle_deg: Some(angle_deg),
            negative_displacement: pair.negative_displacement,
        });
    }
    out
}

/// A pair as reloaded from a dataset directory; geometry is materialized,
/// region membership bookkeeping is not.
#[derive(Debug, Clone)]
pub struct DatasetEntry {
    pub id: usize,
    pub label: PairLabel,
    pub points_a: PointCloud,
    pub points_b: PointCloud,
    pub box_center: Vec3,
    pub box_extent: Vec3,
    pub augment_angle_deg: Option<f64>,
}

/// Serialize pairs as a directory: `index.txt` plus per-region XYZ files.
pub fn write_dataset(dir: &Path, pairs: &[TrainingPair]) -> Result<()> {
    let regions = dir.join("regions");
    fs::create_dir_all(&regions).map_err(|e| io_err(&regions, e))?;
    let mut index = String::from("# id label cx cy cz ex ey ez angle_deg\n");
    for (i, pair) in pairs.iter().enumerate() {
        let c = pair.region_b.box_center();
        let e = pair.region_b.box_extent();
        let label = match pair.label {
            PairLabel::Positive => "pos",
            PairLabel::Negative => "neg",
        };
        let angle = match pair.augment_angle_deg {
            Some(a) => format!("{a}"),
            None => "na".to_string(),
        };
        writeln!(
            index,
            "{i:06} {label} {} {} {} {} {} {} {angle}",
            c.x, c.y, c.z, e.x, e.y, e.z
        )
        .expect("string write");
        crate::io::save_xyz(&pair.points_a, &regions.join(format!("{i:06}_a.xyz")))?;
        crate::io::save_xyz(&pair.points_b, &regions.join(format!("{i:06}_b.xyz")))?;
    }
    let index_path = dir.join("index.txt");
    fs::write(&index_path, index).map_err(|e| io_err(&index_path, e))
}

pub fn read_dataset(dir: &Path) -> Result<Vec<DatasetEntry>> {
    let index_path = dir.join("index.txt");
    let text = fs::read_to_string(&index_path).map_err(|e| io_err(&index_path, e))?;
    let mut entries = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 9 {
            return Err(Error::Parse {
                path: index_path.clone(),
                line: line_no,
                message: format!("expected 9 fields, found {}", fields.len()),
            });
        }
        let id: usize = fields[0].parse().map_err(|_| Error::Parse {
            path: index_path.clone(),
            line: line_no,
            message: "bad pair id".into(),
        })?;
        let label = match fields[1] {
            "pos" => PairLabel::Positive,
            "neg" => PairLabel::Negative,
            other => {
                return Err(Error::Parse {
                    path: index_path.clone(),
                    line: line_no,
                    message: format!("unknown label '{other}'"),
                })
            }
        };
        let num = |s: &str| -> Result<f64> {
            s.parse().map_err(|_| Error::Parse {
                path: index_path.clone(),
                line: line_no,
                message: format!("non-numeric field '{s}'"),
            })
        };
        let box_center = Vec3::new(num(fields[2])?, num(fields[3])?, num(fields[4])?);
        let box_extent = Vec3::new(num(fields[5])?, num(fields[6])?, num(fields[7])?);
        let augment_angle_deg = if fields[8] == "na" {
            None
        } else {
            Some(num(fields[8])?)
        };
        let regions = dir.join("regions");
        let points_a = crate::io::load_xyz(&regions.join(format!("{id:06}_a.xyz")))?;
        let points_b = crate::io::load_xyz(&regions.join(format!("{id:06}_b.xyz")))?;
        entries.push(DatasetEntry {
            id,
            label,
            points_a,
            points_b,
            box_center,
            box_extent,
            augment_angle_deg,
        });
    }
    Ok(entries)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{generate_scene, PlacedPrimitive, PoseSpec, SceneSpec};

    fn test_scene(seed: u64) -> PointCloud {
        generate_scene(&SceneSpec {
            seed,
            primitives: vec![
                PlacedPrimitive {
                    kind: "plane".into(),
                    extent: vec![3.0, 3.0],
                    points: 2500,
                    pose: PoseSpec::default(),
                },
                PlacedPrimitive {
                    kind: "sphere".into(),
                    extent: vec![0.5],
                    points: 800,
                    pose: PoseSpec {
                        translation: [0.8, 0.5, 0.5],
                        ..PoseSpec::default()
                    },
                },
                PlacedPrimitive {
                    kind: "cuboid".into(),
                    extent: vec![0.6, 0.4, 0.5],
                    points: 700,
                    pose: PoseSpec {
                        translation: [-0.9, -0.6, 0.25],
                        ..PoseSpec::default()
                    },
                },
            ],
        })
        .unwrap()
        .coords_only()
    }

    fn small_cfg() -> SampleConfig {
        SampleConfig {
            n_pos: 30,
            n_neg: 30,
            ..SampleConfig::default()
        }
    }

    #[test]
    fn grown_region_contains_seed_and_respects_box() {
        let (cloud, _) = point_features(&test_scene(5), 16).unwrap();
        let index = SpatialIndex::build(&cloud).unwrap();
        let cfg = SampleConfig::default();
        let region = grow_region(&cloud, &index, &cfg, 123, 0.1).unwrap();
        assert!(region.members.contains(&123));
        for &m in &region.members {
            let p = cloud.point(m);
            for k in 0..3 {
                assert!(p[k] >= region.box_min[k] && p[k] <= region.box_max[k]);
            }
        }
        // Sphere radius covers every member.
        for &m in &region.members {
            assert!(region.sphere.contains(&cloud.point(m), 1e-9));
        }
    }

    #[test]
    fn zero_threshold_with_distinct_features_yields_singleton() {
        // A curved surface gives every point distinct features.
        let scene = generate_scene(&SceneSpec {
            seed: 8,
            primitives: vec![PlacedPrimitive {
                kind: "sphere".into(),
                extent: vec![1.0],
                points: 500,
                pose: PoseSpec::default(),
            }],
        })
        .unwrap()
        .coords_only();
        let (cloud, _) = point_features(&scene, 12).unwrap();
        let index = SpatialIndex::build(&cloud).unwrap();
        let region = grow_region(&cloud, &index, &SampleConfig::default(), 7, 0.0).unwrap();
        assert_eq!(region.members, vec![7]);
    }

    #[test]
    fn huge_threshold_on_plane_grows_whole_cloud() {
        // 200-point plane: uniform features, fully connected under k-NN BFS.
        let scene = generate_scene(&SceneSpec {
            seed: 3,
            primitives: vec![PlacedPrimitive {
                kind: "plane".into(),
                extent: vec![1.0, 1.0],
                points: 200,
                pose: PoseSpec::default(),
            }],
        })
        .unwrap()
        .coords_only();
        let (cloud, _) = point_features(&scene, 8).unwrap();
        let index = SpatialIndex::build(&cloud).unwrap();
        let region = grow_region(&cloud, &index, &SampleConfig::default(), 0, 1e9).unwrap();
        assert_eq!(region.members.len(), 200);
    }

    #[test]
    fn identical_clouds_give_identical_positive_regions() {
        let pc1 = test_scene(11);
        let outcome = sample_pairs(&pc1, &pc1, &small_cfg(), 77).unwrap();
        assert!(!outcome.partial);
        for pair in outcome.pairs.iter().filter(|p| p.label.is_positive()) {
            assert_eq!(pair.points_a.points(), pair.points_b.points());
        }
    }

    #[test]
    fn positive_pairs_satisfy_count_rule_and_centers_coincide() {
        let pc1 = test_scene(13);
        let pc2 = test_scene(13);
        let outcome = sample_pairs(&pc1, &pc2, &small_cfg(), 5).unwrap();
        let positives: Vec<_> = outcome
            .pairs
            .iter()
            .filter(|p| p.label.is_positive())
            .collect();
        assert_eq!(positives.len(), 30);
        for p in positives {
            assert!(p.region_a.len() >= 51);
            assert!(p.region_b.len() >= 51);
            assert!((p.region_a.box_center() - p.region_b.box_center()).norm() < 1e-12);
        }
    }

    #[test]
    fn negative_displacement_respects_bounds() {
        let pc1 = test_scene(19);
        let outcome = sample_pairs(&pc1, &pc1, &small_cfg(), 9).unwrap();
        let max_radius = pc1.bounding_sphere().unwrap().radius;
        let negatives: Vec<_> = outcome
            .pairs
            .iter()
            .filter(|p| !p.label.is_positive())
            .collect();
        assert_eq!(negatives.len(), 30);
        for n in negatives {
            let drawn = n.negative_displacement.unwrap();
            let r = n.region_a.sphere.radius;
            assert!(drawn >= 3.0 * r && drawn <= max_radius);
            let actual = (n.region_b.box_center() - n.region_a.box_center()).norm();
            assert!((actual - drawn).abs() < 1e-9);
        }
    }

    #[test]
    fn sampling_is_deterministic() {
        let pc1 = test_scene(23);
        let a = sample_pairs(&pc1, &pc1, &small_cfg(), 4).unwrap();
        let b = sample_pairs(&pc1, &pc1, &small_cfg(), 4).unwrap();
        assert_eq!(a.pairs.len(), b.pairs.len());
        for (x, y) in a.pairs.iter().zip(&b.pairs) {
            assert_eq!(x.points_a, y.points_a);
            assert_eq!(x.points_b, y.points_b);
            assert_eq!(x.label, y.label);
        }
    }

    #[test]
    fn augment_doubles_and_bounds_angles() {
        let pc1 = test_scene(29);
        let mut cfg = small_cfg();
        cfg.n_pos = 10;
        cfg.n_neg = 10;
        let outcome = sample_pairs(&pc1, &pc1, &cfg, 2).unwrap();
        let augmented = augment(&outcome.pairs, AugmentAxis::Z, 6);
        assert_eq!(augmented.len(), 2 * outcome.pairs.len());
        let n = outcome.pairs.len();
        for (orig, copy) in augmented[..n].iter().zip(&augmented[n..]) {
            let angle = copy.augment_angle_deg.unwrap();
            assert!((-90.0..=90.0).contains(&angle));
            assert_eq!(copy.label, orig.label);
            assert_eq!(copy.points_b.len(), orig.points_b.len());
            // Rotation about the centroid is an isometry of the region.
            for i in 0..orig.points_b.len().min(10) {
                for j in (i + 1)..orig.points_b.len().min(10) {
                    let before = (orig.points_b.point(i) - orig.points_b.point(j)).norm();
                    let after = (copy.points_b.point(i) - copy.points_b.point(j)).norm();
                    assert!((before - after).abs() < 1e-9);
                }
            }
        }
        // Balance is preserved.
        let pos = augmented.iter().filter(|p| p.label.is_positive()).count();
        assert_eq!(pos * 2, augmented.len());
    }

    #[test]
    fn dataset_round_trip() {
        let pc1 = test_scene(31);
        let mut cfg = small_cfg();
        cfg.n_pos = 5;
        cfg.n_neg = 5;
        let outcome = sample_pairs(&pc1, &pc1, &cfg, 3).unwrap();
        let pairs = augment(&outcome.pairs, AugmentAxis::Z, 1);
        let dir = tempfile::tempdir().unwrap();
        write_dataset(dir.path(), &pairs).unwrap();
        let entries = read_dataset(dir.path()).unwrap();
        assert_eq!(entries.len(), pairs.len());
        for (entry, pair) in entries.iter().zip(&pairs) {
            assert_eq!(entry.label, pair.label);
            assert_eq!(entry.points_a.points(), pair.points_a.points());
            assert_eq!(entry.points_b.points(), pair.points_b.points());
            assert_eq!(entry.augment_angle_deg, pair.augment_angle_deg);
        }
    }
}
