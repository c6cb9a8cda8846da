//! Normal-driven region-growing segmentation and control point extraction.
//!
//! The cloud is partitioned by growing segments over the k-NN graph: a
//! neighbor joins while its normal stays within an angular threshold of the
//! segment's running mean normal and the spatial step stays below a
//! threshold derived from the mean nearest-neighbor spacing. Undersized
//! segments are merged into their spatially nearest segment. The centroid
//! of each final segment is its control point.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::cloud::{PointCloud, Vec3};
use crate::index::SpatialIndex;
use crate::net::Descriptor;
use crate::sampler::Region;
use crate::{Error, Result};

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct SegmentationParams {
    /// Max angle between a candidate normal and the segment mean, degrees.
    pub angle_threshold_deg: f64,
    /// Spatial step limit as a multiple of the mean 1-NN spacing.
    pub distance_factor: f64,
    /// Segments below this size get merged into their nearest neighbor.
    pub min_points: usize,
    /// Neighbors per point in the growth graph.
    pub graph_k: usize,
}

impl Default for SegmentationParams {
    fn default() -> Self {
        Self {
            angle_threshold_deg: 15.0,
            distance_factor: 2.0,
            min_points: 50,
            graph_k: 10,
        }
    }
}

/// Segment centroid with its member region and, once described, its
/// descriptor.
#[derive(Debug, Clone)]
pub struct ControlPoint {
    pub position: Vec3,
    pub segment: Region,
    pub descriptor: Option<Descriptor>,
}

/// Partition `cloud` into segments and return one control point per
/// segment. Requires normals (run `point_features` first).
pub fn extract_control_points(
    cloud: &PointCloud,
    params: &SegmentationParams,
) -> Result<Vec<ControlPoint>> {
    if cloud.is_empty() {
        return Err(Error::InvalidInput("cannot segment an empty cloud".into()));
    }
    let normals = cloud.normals().ok_or_else(|| {
        Error::InvalidInput("segmentation requires normals (run point_features first)".into())
    })?;
    let n = cloud.len();
    let index = SpatialIndex::build(cloud)?;

    // Growth graph and mean nearest-neighbor spacing.
    let mut knn: Vec<Vec<u32>> = Vec::with_capacity(n);
    let mut spacing_sum = 0.0f64;
    for (i, p) in cloud.points().iter().enumerate() {
        let neighbors = index.k_nearest(p, params.graph_k + 1);
        let mut ids = Vec::with_capacity(params.graph_k);
        let mut first_other = None;
        for &(j, d) in &neighbors {
            if j != i {
                if first_other.is_none() {
                    first_other = Some(d);
                }
                ids.push(j as u32);
            }
        }
        spacing_sum += first_other.unwrap_or(0.0);
        knn.push(ids);
    }
    let distance_threshold = params.distance_factor * (spacing_sum / n as f64);
    let cos_threshold = params.angle_threshold_deg.to_radians().cos();

    // Seeds in ascending curvature order (flattest first) for stable growth.
    let mut seed_order: Vec<usize> = (0..n).collect();
    if let Some(curv) = cloud.curvatures() {
        seed_order.sort_by(|&a, &b| {
            (curv[a], a)
                .partial_cmp(&(curv[b], b))
                .expect("finite curvature")
        });
    }

    let mut segment_of = vec![usize::MAX; n];
    let mut segments: Vec<Vec<usize>> = Vec::new();
    for &seed in &seed_order {
        if segment_of[seed] != usize::MAX {
            continue;
        }
        let seg_id = segments.len();
        let mut members = vec![seed];
        segment_of[seed] = seg_id;
        let mut normal_sum = normals[seed];
        let mut queue = VecDeque::from([seed]);
        while let Some(u) = queue.pop_front() {
            let pu = cloud.point(u);
            let mean = {
                let norm = normal_sum.norm();
                if norm > 1e-12 {
                    normal_sum / norm
                } else {
                    normals[u]
                }
            };
            for &v in &knn[u] {
                let v = v as usize;
                if segment_of[v] != usize::MAX {
                    continue;
                }
                if (cloud.point(v) - pu).norm() > distance_threshold {
                    continue;
                }
                // Sign-aware: a normal and its negation describe the same
                // surface, so compare via |dot|.
                let dot = normals[v].dot(&mean);
                if dot.abs() < cos_threshold {
                    continue;
                }
                segment_of[v] = seg_id;
                members.push(v);
                normal_sum += if dot >= 0.0 { normals[v] } else { -normals[v] };
                queue.push_back(v);
            }
        }
        segments.push(members);
    }

    merge_small_segments(cloud, &index, &mut segments, &mut segment_of, params.min_points);

    // Deterministic output order: by smallest member id.
    let mut order: Vec<usize> = (0..segments.len()).collect();
    order.sort_by_key(|&s| *segments[s].iter().min().expect("non-empty segment"));
    let mut out = Vec::with_capacity(order.len());
    for s in order {
        let region = Region::from_members(cloud, segments[s].clone(), 0)?;
        let position = cloud.select(&region.members).centroid()?;
        out.push(ControlPoint {
            position,
            segment: region,
            descriptor: None,
        });
    }
    Ok(out)
}

/// Merge segments below `min_points` into the segment of their nearest
/// foreign point, smallest segments first, until none remain (or only one
/// segment is left).
fn merge_small_segments(
    cloud: &PointCloud,
    index: &SpatialIndex,
    segments: &mut Vec<Vec<usize>>,
    segment_of: &mut [usize],
    min_points: usize,
) {
    loop {
        let live: Vec<usize> = (0..segments.len())
            .filter(|&s| !segments[s].is_empty())
            .collect();
        if live.len() <= 1 {
            break;
        }
        let Some(&small) = live
            .iter()
            .filter(|&&s| segments[s].len() < min_points)
            .min_by_key(|&&s| (segments[s].len(), s))
        else {
            break;
        };
        // Nearest foreign point over all members, ties by (distance,
        // member id, candidate id) via ascending scan.
        let mut best: Option<(f64, usize)> = None;
        for &m in &segments[small] {
            let p = cloud.point(m);
            let mut k = 8;
            let target = loop {
                let neighbors = index.k_nearest(&p, k);
                if let Some(&(j, d)) = neighbors
                    .iter()
                    .find(|&&(j, _)| segment_of[j] != small)
                {
                    break Some((d, segment_of[j]));
                }
                if k >= cloud.len() {
                    break None;
                }
                k = (k * 2).min(cloud.len());
            };
            if let Some((d, seg)) = target {
                if best.is_none_or(|(bd, _)| d < bd) {
                    best = Some((d, seg));
                }
            }
        }
        let Some((_, target_seg)) = best else { break };
        let members = std::mem::take(&mut segments[small]);
        for &m in &members {
            segment_of[m] = target_seg;
        }
        segments[target_seg].extend(members);
    }
    segments.retain(|s| !s.is_empty());
    // Rebuild the id map to match the compacted vector.
    for (sid, members) in segments.iter().enumerate() {
        for &m in members {
            segment_of[m] = sid;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::point_features;
    use crate::synth::{generate_scene, PlacedPrimitive, PoseSpec, SceneSpec};

    /// Two parallel planes as regular grids, separated by far more than the
    /// distance threshold.
    fn two_plane_cloud(side: usize, separation: f64) -> PointCloud {
        let mut pts = Vec::new();
        for plane in 0..2 {
            let z = plane as f64 * separation;
            for i in 0..side {
                for j in 0..side {
                    pts.push(Vec3::new(i as f64 * 0.1, j as f64 * 0.1, z));
                }
            }
        }
        PointCloud::from_points(pts).unwrap()
    }

    #[test]
    fn two_parallel_planes_make_two_segments() {
        // Grid spacing 0.1 -> threshold 0.2; separation 2.0 = 10x threshold.
        let cloud = two_plane_cloud(12, 2.0);
        let (cloud, _) = point_features(&cloud, 8).unwrap();
        let params = SegmentationParams {
            min_points: 50,
            ..SegmentationParams::default()
        };
        let cps = extract_control_points(&cloud, &params).unwrap();
        assert_eq!(cps.len(), 2);
        // Each control point is its segment's centroid.
        for cp in &cps {
            let centroid = cloud.select(&cp.segment.members).centroid().unwrap();
            assert!((cp.position - centroid).norm() < 1e-9);
        }
    }

    #[test]
    fn segmentation_is_a_partition() {
        let scene = generate_scene(&SceneSpec {
            seed: 3,
            primitives: vec![
                PlacedPrimitive {
                    kind: "plane".into(),
                    extent: vec![2.0, 2.0],
                    points: 1500,
                    pose: PoseSpec::default(),
                },
                PlacedPrimitive {
                    kind: "cuboid".into(),
                    extent: vec![0.6, 0.5, 0.4],
                    points: 900,
                    pose: PoseSpec {
                        translation: [0.0, 0.0, 0.2],
                        ..PoseSpec::default()
                    },
                },
                PlacedPrimitive {
                    kind: "sphere".into(),
                    extent: vec![0.35],
                    points: 600,
                    pose: PoseSpec {
                        translation: [0.9, -0.7, 0.35],
                        ..PoseSpec::default()
                    },
                },
            ],
        })
        .unwrap()
        .coords_only();
        let (cloud, _) = point_features(&scene, 12).unwrap();
        let cps = extract_control_points(&cloud, &SegmentationParams::default()).unwrap();
        assert!(cps.len() >= 3, "got {} segments", cps.len());
        let mut seen = vec![false; cloud.len()];
        for cp in &cps {
            for &m in &cp.segment.members {
                assert!(!seen[m], "point {m} assigned twice");
                seen[m] = true;
            }
        }
        assert!(seen.iter().all(|s| *s), "every point assigned exactly once");
        // Merging leaves no undersized segments when several exist.
        if cps.len() > 1 {
            for cp in &cps {
                assert!(cp.segment.len() >= 50);
            }
        }
    }

    #[test]
    fn requires_normals_and_nonempty() {
        let bare = two_plane_cloud(6, 1.0);
        assert!(extract_control_points(&bare, &SegmentationParams::default()).is_err());
        assert!(
            extract_control_points(&PointCloud::new(), &SegmentationParams::default()).is_err()
        );
    }

    #[test]
    fn deterministic_output() {
        let cloud = two_plane_cloud(10, 1.5);
        let (cloud, _) = point_features(&cloud, 8).unwrap();
        let a = extract_control_points(&cloud, &SegmentationParams::default()).unwrap();
        let b = extract_control_points(&cloud, &SegmentationParams::default()).unwrap();
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.segment.members, y.segment.members);
            assert_eq!(x.position, y.position);
        }
    }
}
