//! k-d tree spatial index over a point cloud.
//!
//! Hand-rolled rather than pulled in as a dependency so that tie-breaking
//! (always lowest point id on equal distance) is guaranteed to match the
//! brute-force scan the tests compare against. Queries are read-only and
//! safe to run concurrently.

use crate::cloud::{PointCloud, Vec3};
use crate::{Error, Result};

/// Immutable k-d tree. Query results are identical to a brute-force linear
/// scan, including tie-breaking by lowest point id.
#[derive(Debug, Clone)]
pub struct SpatialIndex {
    points: Vec<Vec3>,
    order: Vec<u32>,
    axes: Vec<u8>,
}

#[inline]
fn dist2(a: &Vec3, b: &Vec3) -> f64 {
    let dx = a.x - b.x;
    let dy = a.y - b.y;
    let dz = a.z - b.z;
    dx * dx + dy * dy + dz * dz
}

impl SpatialIndex {
    pub fn build(cloud: &PointCloud) -> Result<Self> {
        if cloud.is_empty() {
            return Err(Error::InvalidInput("cannot index an empty cloud".into()));
        }
        let points = cloud.points().to_vec();
        let n = points.len();
        let mut order: Vec<u32> = (0..n as u32).collect();
        let mut axes = vec![0u8; n];
        build_range(&points, &mut order, &mut axes, 0, n);
        Ok(Self {
            points,
            order,
            axes,
        })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Globally nearest point to `query`; ties broken by lowest id.
    pub fn nearest(&self, query: &Vec3) -> (usize, f64) {
        let mut best = (f64::INFINITY, u32::MAX);
        self.nearest_rec(query, 0, self.points.len(), &mut best);
        (best.1 as usize, best.0.sqrt())
    }

    fn nearest_rec(&self, query: &Vec3, lo: usize, hi: usize, best: &mut (f64, u32)) {
        if lo >= hi {
            return;
        }
        let mid = lo + (hi - lo) / 2;
        let id = self.order[mid];
        let d2 = dist2(&self.points[id as usize], query);
        if d2 < best.0 || (d2 == best.0 && id < best.1) {
            *best = (d2, id);
        }
        let axis = self.axes[mid] as usize;
        let delta = query[axis] - self.points[id as usize][axis];
        let (near, far) = if delta < 0.0 {
            ((lo, mid), (mid + 1, hi))
        } else {
            ((mid + 1, hi), (lo, mid))
        };
        self.nearest_rec(query, near.0, near.1, best);
        if delta * delta <= best.0 {
            self.nearest_rec(query, far.0, far.1, best);
        }
    }

    /// The `k` nearest points, sorted by (distance, id). Returns fewer when
    /// the cloud holds fewer than `k` points.
    pub fn k_nearest(&self, query: &Vec3, k: usize) -> Vec<(usize, f64)> {
        if k == 0 {
            return Vec::new();
        }
        let mut heap: Vec<(f64, u32)> = Vec::with_capacity(k + 1);
        self.knn_rec(query, 0, self.points.len(), k, &mut heap);
        heap.sort_unstable_by(|a, b| a.partial_cmp(b).expect("finite distances"));
        heap.into_iter()
            .map(|(d2, id)| (id as usize, d2.sqrt()))
            .collect()
    }

    fn knn_rec(&self, query: &Vec3, lo: usize, hi: usize, k: usize, heap: &mut Vec<(f64, u32)>) {
        if lo >= hi {
            return;
        }
        let mid = lo + (hi - lo) / 2;
        let id = self.order[mid];
        let d2 = dist2(&self.points[id as usize], query);
        push_candidate(heap, k, (d2, id));
        let axis = self.axes[mid] as usize;
        let delta = query[axis] - self.points[id as usize][axis];
        let (near, far) = if delta < 0.0 {
            ((lo, mid), (mid + 1, hi))
        } else {
            ((mid + 1, hi), (lo, mid))
        };
        self.knn_rec(query, near.0, near.1, k, heap);
        if heap.len() < k || delta * delta <= worst(heap).0 {
            self.knn_rec(query, far.0, far.1, k, heap);
        }
    }

    /// All points within `radius` (inclusive), sorted by (distance, id).
    pub fn within_radius(&self, query: &Vec3, radius: f64) -> Vec<(usize, f64)> {
        let mut hits: Vec<(f64, u32)> = Vec::new();
        self.radius_rec(query, 0, self.points.len(), radius * radius, &mut hits);
        hits.sort_unstable_by(|a, b| a.partial_cmp(b).expect("finite distances"));
        hits.into_iter()
            .map(|(d2, id)| (id as usize, d2.sqrt()))
            .collect()
    }

    fn radius_rec(&self, query: &Vec3, lo: usize, hi: usize, r2: f64, hits: &mut Vec<(f64, u32)>) {
        if lo >= hi {
            return;
        }
        let mid = lo + (hi - lo) / 2;
        let id = self.order[mid];
        let d2 = dist2(&self.points[id as usize], query);
        if d2 <= r2 {
            hits.push((d2, id));
        }
        let axis = self.axes[mid] as usize;
        let delta = query[axis] - self.points[id as usize][axis];
        let (near, far) = if delta < 0.0 {
            ((lo, mid), (mid + 1, hi))
        } else {
            ((mid + 1, hi), (lo, mid))
        };
        self.radius_rec(query, near.0, near.1, r2, hits);
        if delta * delta <= r2 {
            self.radius_rec(query, far.0, far.1, r2, hits);
        }
    }
}

/// Keep the k smallest (d2, id) candidates; the worst sits wherever, we
/// only ever need its value, so a small unsorted buffer beats a heap at
/// the neighborhood sizes used here.
#[inline]
fn push_candidate(heap: &mut Vec<(f64, u32)>, k: usize, cand: (f64, u32)) {
    if heap.len() < k {
        heap.push(cand);
    } else {
        let (wi, w) = worst_indexed(heap);
        if cand < w {
            heap[wi] = cand;
        }
    }
}

#[inline]
fn worst(heap: &[(f64, u32)]) -> (f64, u32) {
    worst_indexed(heap).1
}

#[inline]
fn worst_indexed(heap: &[(f64, u32)]) -> (usize, (f64, u32)) {
    let mut wi = 0;
    let mut w = heap[0];
    for (i, &c) in heap.iter().enumerate().skip(1) {
        if c > w {
            w = c;
            wi = i;
        }
    }
    (wi, w)
}

fn build_range(points: &[Vec3], order: &mut [u32], axes: &mut [u8], lo: usize, hi: usize) {
    if hi - lo <= 1 {
        return;
    }
    // Split along the widest axis of this range's bounding box.
    let mut min = points[order[lo] as usize];
    let mut max = min;
    for &id in &order[lo..hi] {
        let p = &points[id as usize];
        for k in 0..3 {
            min[k] = min[k].min(p[k]);
            max[k] = max[k].max(p[k]);
        }
    }
    let extent = max - min;
    let axis = if extent.x >= extent.y && extent.x >= extent.z {
        0
    } else if extent.y >= extent.z {
        1
    } else {
        2
    };
    let mid = lo + (hi - lo) / 2;
    order[lo..hi].select_nth_unstable_by(mid - lo, |&a, &b| {
        (points[a as usize][axis], a)
            .partial_cmp(&(points[b as usize][axis], b))
            .expect("finite coordinates")
    });
    axes[mid] = axis as u8;
    build_range(points, order, axes, lo, mid);
    build_range(points, order, axes, mid + 1, hi);
}
