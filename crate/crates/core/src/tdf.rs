//! Truncated Distance Function voxelization of local regions.
//!
//! The region's containing sphere is inscribed in a cubic grid
//! (`voxel_size = 2 * radius / dim`), and each voxel stores
//! `1 - min(d / (truncation * voxel_size), 1)` where `d` is the distance
//! from the voxel center to the nearest region point: 1 on the surface,
//! decaying to 0 at the truncation distance. Recentered and rescaled per
//! region, which is what makes patch-level descriptors scale-consistent.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::cloud::{PointCloud, Vec3};
use crate::error::io_err;
use crate::{Error, Result};

/// Cubic TDF grid with values in [0, 1], stored x-fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct VoxelGrid {
    dim: usize,
    voxel_size: f64,
    origin: Vec3,
    values: Vec<f64>,
}

impl VoxelGrid {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn voxel_size(&self) -> f64 {
        self.voxel_size
    }

    /// World position of the grid's minimum corner.
    pub fn origin(&self) -> Vec3 {
        self.origin
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        x + self.dim * (y + self.dim * z)
    }

    pub fn value(&self, x: usize, y: usize, z: usize) -> f64 {
        self.values[self.index(x, y, z)]
    }

    /// World position of the center of voxel (x, y, z).
    pub fn voxel_center(&self, x: usize, y: usize, z: usize) -> Vec3 {
        self.origin
            + self.voxel_size
                * Vec3::new(x as f64 + 0.5, y as f64 + 0.5, z as f64 + 0.5)
    }

    /// Debug dump: ASCII header plus dim^3 values in x-fastest order.
    pub fn write(&self, path: &Path) -> Result<()> {
        let mut out = String::new();
        writeln!(out, "tdf {} {}", self.dim, self.voxel_size).expect("string write");
        writeln!(out, "origin {} {} {}", self.origin.x, self.origin.y, self.origin.z)
            .expect("string write");
        for v in &self.values {
            writeln!(out, "{v}").expect("string write");
        }
        fs::write(path, out).map_err(|e| io_err(path, e))
    }

    pub fn read(path: &Path) -> Result<VoxelGrid> {
        let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
        let parse = |line: usize, msg: &str| Error::Parse {
            path: path.to_path_buf(),
            line,
            message: msg.to_string(),
        };
        let mut lines = text.lines();
        let header: Vec<&str> = lines
            .next()
            .ok_or_else(|| parse(1, "empty file"))?
            .split_whitespace()
            .collect();
        let (dim, voxel_size) = match header[..] {
            ["tdf", d, v] => (
                d.parse::<usize>().map_err(|_| parse(1, "bad dim"))?,
                v.parse::<f64>().map_err(|_| parse(1, "bad voxel size"))?,
            ),
            _ => return Err(parse(1, "expected 'tdf <dim> <voxel_size>'")),
        };
        let origin_line: Vec<&str> = lines
            .next()
            .ok_or_else(|| parse(2, "missing origin"))?
            .split_whitespace()
            .collect();
        let origin = match origin_line[..] {
            ["origin", x, y, z] => Vec3::new(
                x.parse().map_err(|_| parse(2, "bad origin"))?,
                y.parse().map_err(|_| parse(2, "bad origin"))?,
                z.parse().map_err(|_| parse(2, "bad origin"))?,
            ),
            _ => return Err(parse(2, "expected 'origin <x> <y> <z>'")),
        };
        let mut values = Vec::with_capacity(dim * dim * dim);
        for (idx, line) in lines.enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            values.push(line.parse::<f64>().map_err(|_| parse(idx + 3, "bad value"))?);
        }
        if values.len() != dim * dim * dim {
            return Err(parse(
                1,
                &format!("expected {} values, found {}", dim * dim * dim, values.len()),
            ));
        }
        Ok(VoxelGrid {
            dim,
            voxel_size,
            origin,
            values,
        })
    }
}

/// Voxelize a region into a `dim`^3 TDF grid; `truncation_voxels` is the
/// truncation distance in multiples of the voxel size.
pub fn voxelize_tdf(region: &PointCloud, dim: usize, truncation_voxels: f64) -> Result<VoxelGrid> {
    if region.is_empty() {
        return Err(Error::InvalidInput("cannot voxelize an empty region".into()));
    }
    if dim < 4 {
        return Err(Error::InvalidInput(format!("grid dim {dim} must be at least 4")));
    }
    if !(truncation_voxels > 0.0) {
        return Err(Error::InvalidInput("truncation must be positive".into()));
    }
    let sphere = region.bounding_sphere()?;
    let voxel_size = if sphere.radius > 0.0 {
        2.0 * sphere.radius / dim as f64
    } else {
        1.0
    };
    // Work in sphere-centered coordinates so the grid values depend only on
    // point offsets, making translation invariance exact.
    let centered: Vec<Vec3> = region.points().iter().map(|p| p - sphere.center).collect();
    let half = dim as f64 / 2.0;
    let truncation = truncation_voxels * voxel_size;

    // Bucket points by voxel cell; truncation bounds the search to a few
    // Chebyshev rings, so nearest-point queries stay local.
    let cell_of = |p: &Vec3| -> (usize, usize, usize) {
        let f = |v: f64| (((v / voxel_size) + half).floor() as isize).clamp(0, dim as isize - 1);
        (f(p.x) as usize, f(p.y) as usize, f(p.z) as usize)
    };
    let mut counts = vec![0u32; dim * dim * dim + 1];
    let cell_index = |x: usize, y: usize, z: usize| x + dim * (y + dim * z);
    for p in &centered {
        let (x, y, z) = cell_of(p);
        counts[cell_index(x, y, z) + 1] += 1;
    }
    for i in 1..counts.len() {
        counts[i] += counts[i - 1];
    }
    let mut bucket_points = vec![0u32; centered.len()];
    let mut cursor = counts.clone();
    for (i, p) in centered.iter().enumerate() {
        let (x, y, z) = cell_of(p);
        let c = cell_index(x, y, z);
        bucket_points[cursor[c] as usize] = i as u32;
        cursor[c] += 1;
    }

    // Rings worth scanning: a cell at Chebyshev distance r can hold a point
    // no closer than (r - 0.5) * voxel_size from this voxel center.
    let max_ring = ((truncation_voxels + 0.5).ceil() as isize).min(dim as isize);
    let mut values = vec![0.0; dim * dim * dim];
    for z in 0..dim {
        for y in 0..dim {
            for x in 0..dim {
                let center = Vec3::new(
                    voxel_size * (x as f64 + 0.5 - half),
                    voxel_size * (y as f64 + 0.5 - half),
                    voxel_size * (z as f64 + 0.5 - half),
                );
                let mut best = f64::INFINITY;
                for r in 0..=max_ring {
                    // `best` holds a squared distance during the scan.
                    let ring_min = (r as f64 - 0.5).max(0.0) * voxel_size;
                    if ring_min * ring_min >= best || ring_min >= truncation {
                        break;
                    }
                    // All cells whose Chebyshev distance from (x, y, z) is r.
                    let (xi, yi, zi) = (x as isize, y as isize, z as isize);
                    for dz in -r..=r {
                        let cz = zi + dz;
                        if cz < 0 || cz >= dim as isize {
                            continue;
                        }
                        for dy in -r..=r {
                            let cy = yi + dy;
                            if cy < 0 || cy >= dim as isize {
                                continue;
                            }
                            let on_face = dz.abs() == r || dy.abs() == r;
                            let mut dx = -r;
                            while dx <= r {
                                let cx = xi + dx;
                                if cx >= 0 && cx < dim as isize {
                                    let c = cell_index(cx as usize, cy as usize, cz as usize);
                                    let (s, e) = (counts[c] as usize, counts[c + 1] as usize);
                                    for &pi in &bucket_points[s..e] {
                                        let p = &centered[pi as usize];
                                        let ddx = p.x - center.x;
                                        let ddy = p.y - center.y;
                                        let ddz = p.z - center.z;
                                        let d2 = ddx * ddx + ddy * ddy + ddz * ddz;
                                        if d2 < best {
                                            best = d2;
                                        }
                                    }
                                }
                                // Interior of the ring: only x = ±r cells.
                                dx += if on_face || dx == r { 1 } else { 2 * r };
                            }
                        }
                    }
                }
                let d = best.sqrt();
                values[x + dim * (y + dim * z)] = 1.0 - (d / truncation).min(1.0);
            }
        }
    }
    Ok(VoxelGrid {
        dim,
        voxel_size,
        origin: sphere.center - Vec3::new(half, half, half) * voxel_size,
        values,
    })
}
