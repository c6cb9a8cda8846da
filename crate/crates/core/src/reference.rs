//! Brute-force reference implementations.
//!
//! Slow, obviously-correct versions of the crate's numeric kernels, written
//! independently of the optimized paths. Validation tests and benchmarks
//! compare against these; nothing in the production pipeline calls them.

use ndarray::{Array4, ArrayView4};

use crate::cloud::{PointCloud, Vec3};
use crate::net::{Layer, NetWeights};
use crate::sampler::PairLabel;

/// Linear-scan nearest neighbor with lowest-id tie-breaking.
pub fn nearest_linear(cloud: &PointCloud, query: &Vec3) -> Option<(usize, f64)> {
    let mut best: Option<(f64, usize)> = None;
    for (i, p) in cloud.points().iter().enumerate() {
        let dx = p.x - query.x;
        let dy = p.y - query.y;
        let dz = p.z - query.z;
        let d2 = dx * dx + dy * dy + dz * dz;
        if best.is_none_or(|(bd, bi)| d2 < bd || (d2 == bd && i < bi)) {
            best = Some((d2, i));
        }
    }
    best.map(|(d2, i)| (i, d2.sqrt()))
}

/// Per-voxel TDF straight from the definition: for every voxel center, scan
/// all region points for the nearest distance.
pub fn tdf_linear(region: &PointCloud, dim: usize, truncation_voxels: f64) -> Vec<f64> {
    let sphere = region.bounding_sphere().expect("non-empty region");
    let voxel_size = if sphere.radius > 0.0 {
        2.0 * sphere.radius / dim as f64
    } else {
        1.0
    };
    let origin = sphere.center - Vec3::new(1.0, 1.0, 1.0) * (dim as f64 / 2.0) * voxel_size;
    let truncation = truncation_voxels * voxel_size;
    let mut values = vec![0.0; dim * dim * dim];
    for z in 0..dim {
        for y in 0..dim {
            for x in 0..dim {
                let c = origin
                    + voxel_size * Vec3::new(x as f64 + 0.5, y as f64 + 0.5, z as f64 + 0.5);
                let d = region
                    .points()
                    .iter()
                    .map(|p| (p - c).norm())
                    .fold(f64::INFINITY, f64::min);
                values[x + dim * (y + dim * z)] = 1.0 - (d / truncation).min(1.0);
            }
        }
    }
    values
}

/// Mutual nearest neighbors over descriptor vectors by exhaustive pairwise
/// distances; ties broken by lowest id on both sides.
pub fn mutual_nn_linear(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<(usize, usize, f64)> {
    let dist = |x: &[f64], y: &[f64]| -> f64 {
        x.iter()
            .zip(y)
            .map(|(p, q)| (p - q) * (p - q))
            .sum::<f64>()
            .sqrt()
    };
    let nn = |from: &[Vec<f64>], to: &[Vec<f64>]| -> Vec<usize> {
        from.iter()
            .map(|f| {
                let mut best = (f64::INFINITY, usize::MAX);
                for (j, t) in to.iter().enumerate() {
                    let d = dist(f, t);
                    if d < best.0 || (d == best.0 && j < best.1) {
                        best = (d, j);
                    }
                }
                best.1
            })
            .collect()
    };
    let a_to_b = nn(a, b);
    let b_to_a = nn(b, a);
    let mut out = Vec::new();
    for (i, &j) in a_to_b.iter().enumerate() {
        if j != usize::MAX && b_to_a[j] == i {
            out.push((i, j, dist(&a[i], &b[j])));
        }
    }
    out
}

/// FNV-1a accumulator for activation signatures.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Signature(u64);

impl Default for Signature {
    fn default() -> Self {
        Signature(0xcbf2_9ce4_8422_2325)
    }
}

impl Signature {
    fn push(&mut self, byte: u8) {
        self.0 ^= byte as u64;
        self.0 = self.0.wrapping_mul(0x0000_0100_0000_01B3);
    }

    fn push_usize(&mut self, v: usize) {
        for b in v.to_le_bytes() {
            self.push(b);
        }
    }
}

/// f64 forward pass through the descriptor network, written as plain nested
/// loops. Weights are promoted exactly from f32. Also accumulates a
/// signature of every ReLU state and pooling argmax, so finite-difference
/// probes can detect when a perturbation crosses a non-differentiable kink.
pub fn forward_f64(weights: &NetWeights, input: &[f64], sig: &mut Signature) -> Vec<f64> {
    let d = weights.config.input_dim;
    assert_eq!(input.len(), d * d * d);
    let mut act = Array4::from_shape_vec((1, d, d, d), input.to_vec()).expect("cubic input");
    let mut conv_idx = 0usize;
    for layer in &weights.config.layers {
        act = match *layer {
            Layer::Conv3d { kernel, .. } => {
                let w = &weights.convs[conv_idx];
                conv_idx += 1;
                conv_f64(act.view(), w, kernel, sig)
            }
            Layer::MaxPool3d { kernel } => pool_f64(act.view(), kernel, sig),
        };
    }
    let (c, dd, hh, ww) = act.dim();
    let n = (dd * hh * ww) as f64;
    (0..c)
        .map(|ci| {
            let mut s = 0.0;
            for z in 0..dd {
                for y in 0..hh {
                    for x in 0..ww {
                        s += act[[ci, z, y, x]];
                    }
                }
            }
            s / n
        })
        .collect()
}

fn conv_f64(
    input: ArrayView4<f64>,
    w: &crate::net::ConvWeights,
    k: usize,
    sig: &mut Signature,
) -> Array4<f64> {
    let (in_c, d, h, ww) = input.dim();
    let out_c = w.bias.len();
    let (od, oh, ow) = (d - k + 1, h - k + 1, ww - k + 1);
    let mut out = Array4::<f64>::zeros((out_c, od, oh, ow));
    for oc in 0..out_c {
        for z in 0..od {
            for y in 0..oh {
                for x in 0..ow {
                    let mut acc = w.bias[oc] as f64;
                    for ic in 0..in_c {
                        for kz in 0..k {
                            for ky in 0..k {
                                for kx in 0..k {
                                    acc += w.kernel[[oc, ic, kz, ky, kx]] as f64
                                        * input[[ic, z + kz, y + ky, x + kx]];
                                }
                            }
                        }
                    }
                    sig.push(u8::from(acc > 0.0));
                    out[[oc, z, y, x]] = acc.max(0.0);
                }
            }
        }
    }
    out
}

fn pool_f64(input: ArrayView4<f64>, k: usize, sig: &mut Signature) -> Array4<f64> {
    let (c, d, h, w) = input.dim();
    let (od, oh, ow) = (d / k, h / k, w / k);
    let mut out = Array4::<f64>::zeros((c, od, oh, ow));
    for ci in 0..c {
        for z in 0..od {
            for y in 0..oh {
                for x in 0..ow {
                    let mut m = f64::NEG_INFINITY;
                    let mut arg = 0usize;
                    for dz in 0..k {
                        for dy in 0..k {
                            for dx in 0..k {
                                let v = input[[ci, z * k + dz, y * k + dy, x * k + dx]];
                                if v > m {
                                    m = v;
                                    arg = (dz * k + dy) * k + dx;
                                }
                            }
                        }
                    }
                    sig.push_usize(arg);
                    out[[ci, z, y, x]] = m;
                }
            }
        }
    }
    out
}

/// f64 Siamese pair loss via [`forward_f64`], plus the kink signature of
/// both streams and the hinge state.
pub fn pair_loss_f64(
    weights: &NetWeights,
    input_a: &[f64],
    input_b: &[f64],
    label: PairLabel,
    margin: f64,
) -> (f64, Signature) {
    let mut sig = Signature::default();
    let da = forward_f64(weights, input_a, &mut sig);
    let db = forward_f64(weights, input_b, &mut sig);
    let d: f64 = da
        .iter()
        .zip(&db)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt();
    let loss = match label {
        PairLabel::Positive => d * d,
        PairLabel::Negative => {
            sig.push(u8::from(d < margin));
            (margin - d).max(0.0).powi(2)
        }
    };
    (loss, sig)
}
