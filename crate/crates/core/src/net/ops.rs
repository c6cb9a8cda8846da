//! Convolution, pooling, and reduction kernels.
//!
//! Convolutions are lowered to im2col plus a small row-major GEMM whose
//! inner loops run over contiguous spans, which is what lets the compiler
//! vectorize them. Everything here is single-threaded and deterministic;
//! parallelism happens one level up, across pairs in a batch.

use ndarray::{Array1, Array4, Array5, Ix4};

/// C (m x n) += A (m x k) * B (k x n), all row-major. Rows of C are
/// processed four at a time so each streamed row of B feeds four
/// accumulator rows.
fn gemm(m: usize, k: usize, n: usize, a: &[f32], b: &[f32], c: &mut [f32]) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    if n == 1 {
        // Matrix-vector: dot products over contiguous rows of A.
        for i in 0..m {
            let row = &a[i * k..(i + 1) * k];
            let mut acc = 0.0f32;
            for (x, y) in row.iter().zip(b) {
                acc += x * y;
            }
            c[i] += acc;
        }
        return;
    }
    let mut i = 0usize;
    while i + 4 <= m {
        let (r0, rest) = c[i * n..(i + 4) * n].split_at_mut(n);
        let (r1, rest) = rest.split_at_mut(n);
        let (r2, r3) = rest.split_at_mut(n);
        for kk in 0..k {
            let b_row = &b[kk * n..(kk + 1) * n];
            let w0 = a[i * k + kk];
            let w1 = a[(i + 1) * k + kk];
            let w2 = a[(i + 2) * k + kk];
            let w3 = a[(i + 3) * k + kk];
            for ((((bv, c0), c1), c2), c3) in b_row
                .iter()
                .zip(r0.iter_mut())
                .zip(r1.iter_mut())
                .zip(r2.iter_mut())
                .zip(r3.iter_mut())
            {
                *c0 += w0 * bv;
                *c1 += w1 * bv;
                *c2 += w2 * bv;
                *c3 += w3 * bv;
            }
        }
        i += 4;
    }
    for i in i..m {
        let c_row = &mut c[i * n..(i + 1) * n];
        for kk in 0..k {
            let w = a[i * k + kk];
            let b_row = &b[kk * n..(kk + 1) * n];
            for (cv, bv) in c_row.iter_mut().zip(b_row) {
                *cv += w * bv;
            }
        }
    }
}

/// C (m x k) += A (m x n) * B^T, with B stored (k x n) row-major. Four
/// dot products run together to hide accumulation latency.
fn gemm_abt(m: usize, n: usize, k: usize, a: &[f32], b: &[f32], c: &mut [f32]) {
    debug_assert_eq!(a.len(), m * n);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * k);
    for i in 0..m {
        let a_row = &a[i * n..(i + 1) * n];
        let c_row = &mut c[i * k..(i + 1) * k];
        let mut j = 0usize;
        while j + 4 <= k {
            let b0 = &b[j * n..(j + 1) * n];
            let b1 = &b[(j + 1) * n..(j + 2) * n];
            let b2 = &b[(j + 2) * n..(j + 3) * n];
            let b3 = &b[(j + 3) * n..(j + 4) * n];
            let mut acc = [0.0f32; 4];
            for ((((av, x0), x1), x2), x3) in
                a_row.iter().zip(b0).zip(b1).zip(b2).zip(b3)
            {
                acc[0] += av * x0;
                acc[1] += av * x1;
                acc[2] += av * x2;
                acc[3] += av * x3;
            }
            for (cv, av) in c_row[j..j + 4].iter_mut().zip(acc) {
                *cv += av;
            }
            j += 4;
        }
        for j in j..k {
            let b_row = &b[j * n..(j + 1) * n];
            let mut acc = 0.0f32;
            for (x, y) in a_row.iter().zip(b_row) {
                acc += x * y;
            }
            c_row[j] += acc;
        }
    }
}

/// C (k x n) += A^T * B, with A stored (m x k) and B (m x n) row-major.
/// Rows of A/B are consumed four at a time so each streamed row of C is
/// updated with four contributions at once.
fn gemm_atb(m: usize, k: usize, n: usize, a: &[f32], b: &[f32], c: &mut [f32]) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), m * n);
    debug_assert_eq!(c.len(), k * n);
    let mut i = 0usize;
    while i + 4 <= m {
        let b0 = &b[i * n..(i + 1) * n];
        let b1 = &b[(i + 1) * n..(i + 2) * n];
        let b2 = &b[(i + 2) * n..(i + 3) * n];
        let b3 = &b[(i + 3) * n..(i + 4) * n];
        for kk in 0..k {
            let w0 = a[i * k + kk];
            let w1 = a[(i + 1) * k + kk];
            let w2 = a[(i + 2) * k + kk];
            let w3 = a[(i + 3) * k + kk];
            let c_row = &mut c[kk * n..(kk + 1) * n];
            for ((((cv, x0), x1), x2), x3) in
                c_row.iter_mut().zip(b0).zip(b1).zip(b2).zip(b3)
            {
                *cv += w0 * x0 + w1 * x1 + w2 * x2 + w3 * x3;
            }
        }
        i += 4;
    }
    for i in i..m {
        let b_row = &b[i * n..(i + 1) * n];
        for kk in 0..k {
            let w = a[i * k + kk];
            let c_row = &mut c[kk * n..(kk + 1) * n];
            for (cv, bv) in c_row.iter_mut().zip(b_row) {
                *cv += w * bv;
            }
        }
    }
}

struct ConvGeom {
    in_c: usize,
    d: usize,
    h: usize,
    w: usize,
    k: usize,
    od: usize,
    oh: usize,
    ow: usize,
}

impl ConvGeom {
    fn of(input: &Array4<f32>, kernel: &Array5<f32>) -> Self {
        let (in_c, d, h, w) = input.dim();
        let (_, kin_c, k, _, _) = kernel.dim();
        debug_assert_eq!(in_c, kin_c);
        Self {
            in_c,
            d,
            h,
            w,
            k,
            od: d - k + 1,
            oh: h - k + 1,
            ow: w - k + 1,
        }
    }

    fn patch_len(&self) -> usize {
        self.in_c * self.k * self.k * self.k
    }

    fn out_len(&self) -> usize {
        self.od * self.oh * self.ow
    }
}

/// Unfold input windows into a (in_c*k^3) x (od*oh*ow) matrix, row-major.
fn im2col(input: &[f32], g: &ConvGeom, col: &mut Vec<f32>) {
    col.clear();
    col.reserve(g.patch_len() * g.out_len());
    for ic in 0..g.in_c {
        for kz in 0..g.k {
            for ky in 0..g.k {
                for kx in 0..g.k {
                    for z in 0..g.od {
                        for y in 0..g.oh {
                            let start = ((ic * g.d + z + kz) * g.h + y + ky) * g.w + kx;
                            col.extend_from_slice(&input[start..start + g.ow]);
                        }
                    }
                }
            }
        }
    }
}

/// Scatter-add the column matrix layout back onto the input tensor.
fn col2im_add(col: &[f32], g: &ConvGeom, input_grad: &mut [f32]) {
    let mut pos = 0usize;
    for ic in 0..g.in_c {
        for kz in 0..g.k {
            for ky in 0..g.k {
                for kx in 0..g.k {
                    for z in 0..g.od {
                        for y in 0..g.oh {
                            let start = ((ic * g.d + z + kz) * g.h + y + ky) * g.w + kx;
                            let dst = &mut input_grad[start..start + g.ow];
                            let src = &col[pos..pos + g.ow];
                            for (d, s) in dst.iter_mut().zip(src) {
                                *d += s;
                            }
                            pos += g.ow;
                        }
                    }
                }
            }
        }
    }
}

/// Valid 3D convolution with per-output-channel bias, optionally followed
/// by ReLU.
pub(super) fn conv3d_forward(
    input: &Array4<f32>,
    kernel: &Array5<f32>,
    bias: &Array1<f32>,
    relu: bool,
) -> Array4<f32> {
    let g = ConvGeom::of(input, kernel);
    let out_c = kernel.dim().0;
    let mut col = Vec::new();
    im2col(input.as_slice().expect("standard layout"), &g, &mut col);

    let mut out = Array4::<f32>::zeros((out_c, g.od, g.oh, g.ow));
    {
        let out_s = out.as_slice_mut().expect("standard layout");
        let n = g.out_len();
        for oc in 0..out_c {
            out_s[oc * n..(oc + 1) * n].fill(bias[oc]);
        }
        gemm(
            out_c,
            g.patch_len(),
            n,
            kernel.as_slice().expect("standard layout"),
            &col,
            out_s,
        );
        if relu {
            for v in out_s.iter_mut() {
                if *v < 0.0 {
                    *v = 0.0;
                }
            }
        }
    }
    out
}

/// Gradients of a valid convolution: (d_kernel, d_bias, d_input), given the
/// gradient with respect to the (ReLU-masked) output. `need_input_grad`
/// can be false for the first layer, whose input is data.
pub(super) fn conv3d_backward(
    input: &Array4<f32>,
    kernel: &Array5<f32>,
    grad_out: &Array4<f32>,
    need_input_grad: bool,
) -> (Array5<f32>, Array1<f32>, Array4<f32>) {
    let g = ConvGeom::of(input, kernel);
    let out_c = kernel.dim().0;
    let n = g.out_len();
    let kdim = g.patch_len();

    let mut col = Vec::new();
    im2col(input.as_slice().expect("standard layout"), &g, &mut col);
    let g_s = grad_out.as_slice().expect("standard layout");

    let mut d_kernel = Array5::<f32>::zeros(kernel.raw_dim());
    gemm_abt(
        out_c,
        n,
        kdim,
        g_s,
        &col,
        d_kernel.as_slice_mut().expect("standard layout"),
    );

    let mut d_bias = Array1::<f32>::zeros(out_c);
    for oc in 0..out_c {
        d_bias[oc] = g_s[oc * n..(oc + 1) * n].iter().sum();
    }

    let mut d_input = Array4::<f32>::zeros(input.raw_dim());
    if need_input_grad {
        let mut d_col = vec![0.0f32; kdim * n];
        gemm_atb(
            out_c,
            kdim,
            n,
            kernel.as_slice().expect("standard layout"),
            g_s,
            &mut d_col,
        );
        col2im_add(
            &d_col,
            &g,
            d_input.as_slice_mut().expect("standard layout"),
        );
    }
    (d_kernel, d_bias, d_input)
}

/// Zero the gradient wherever the stored post-ReLU output is not positive.
pub(super) fn relu_mask_inplace(grad: &mut Array4<f32>, output: &Array4<f32>) {
    let g = grad.as_slice_mut().expect("standard layout");
    let o = output.as_slice().expect("standard layout");
    for (g, o) in g.iter_mut().zip(o) {
        if *o <= 0.0 {
            *g = 0.0;
        }
    }
}

/// Max pooling with stride equal to the kernel; trailing partial windows
/// are dropped.
pub(super) fn maxpool_forward(input: &Array4<f32>, k: usize) -> Array4<f32> {
    let (c, d, h, w) = input.dim();
    let (od, oh, ow) = (d / k, h / k, w / k);
    let in_s = input.as_slice().expect("standard layout");
    let mut out = Array4::<f32>::zeros((c, od, oh, ow));
    let out_s = out.as_slice_mut().expect("standard layout");
    let mut o = 0usize;
    for ci in 0..c {
        for z in 0..od {
            for y in 0..oh {
                for x in 0..ow {
                    let mut m = f32::NEG_INFINITY;
                    for dz in 0..k {
                        for dy in 0..k {
                            let base = ((ci * d + z * k + dz) * h + y * k + dy) * w + x * k;
                            for &v in &in_s[base..base + k] {
                                if v > m {
                                    m = v;
                                }
                            }
                        }
                    }
                    out_s[o] = m;
                    o += 1;
                }
            }
        }
    }
    out
}

/// Routes each pooled gradient to the first maximal element of its window
/// (scan order z, y, x), which keeps backward deterministic under ties.
pub(super) fn maxpool_backward(input: &Array4<f32>, k: usize, grad_out: &Array4<f32>) -> Array4<f32> {
    let (c, d, h, w) = input.dim();
    let (_, od, oh, ow) = grad_out.dim();
    let in_s = input.as_slice().expect("standard layout");
    let g_s = grad_out.as_slice().expect("standard layout");
    let mut d_input = Array4::<f32>::zeros(input.raw_dim());
    let di_s = d_input.as_slice_mut().expect("standard layout");
    let mut o = 0usize;
    for ci in 0..c {
        for z in 0..od {
            for y in 0..oh {
                for x in 0..ow {
                    let mut m = f32::NEG_INFINITY;
                    let mut arg = 0usize;
                    for dz in 0..k {
                        for dy in 0..k {
                            let base = ((ci * d + z * k + dz) * h + y * k + dy) * w + x * k;
                            for (dx, &v) in in_s[base..base + k].iter().enumerate() {
                                if v > m {
                                    m = v;
                                    arg = base + dx;
                                }
                            }
                        }
                    }
                    di_s[arg] += g_s[o];
                    o += 1;
                }
            }
        }
    }
    d_input
}

/// Mean over the spatial dims, one value per channel.
pub(super) fn global_mean(input: &Array4<f32>) -> Vec<f32> {
    let (c, d, h, w) = input.dim();
    let n = (d * h * w) as f32;
    let s = input.as_slice().expect("standard layout");
    (0..c)
        .map(|ci| {
            let start = ci * d * h * w;
            s[start..start + d * h * w].iter().sum::<f32>() / n
        })
        .collect()
}

pub(super) fn global_mean_backward(shape: Ix4, desc_grad: &[f32]) -> Array4<f32> {
    let (c, d, h, w) = (shape[0], shape[1], shape[2], shape[3]);
    let n = (d * h * w) as f32;
    let mut out = Array4::<f32>::zeros((c, d, h, w));
    for ci in 0..c {
        let g = desc_grad[ci] / n;
        out.index_axis_mut(ndarray::Axis(0), ci).fill(g);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn conv_identity_kernel_passes_through() {
        // 1x1x1 kernel with weight 1 and zero bias is the identity.
        let input = Array4::from_shape_fn((1, 3, 3, 3), |(_, z, y, x)| (z + 2 * y + 4 * x) as f32);
        let kernel = Array5::from_elem((1, 1, 1, 1, 1), 1.0f32);
        let bias = Array1::zeros(1);
        let out = conv3d_forward(&input, &kernel, &bias, false);
        assert_eq!(out, input);
    }

    #[test]
    fn conv_sums_window() {
        // All-ones kernel over an all-ones input counts the window volume.
        let input = Array4::from_elem((2, 4, 4, 4), 1.0f32);
        let kernel = Array5::from_elem((1, 2, 3, 3, 3), 1.0f32);
        let bias = Array1::from_vec(vec![0.5]);
        let out = conv3d_forward(&input, &kernel, &bias, false);
        assert_eq!(out.dim(), (1, 2, 2, 2));
        assert!(out.iter().all(|v| (*v - 54.5).abs() < 1e-6));
    }

    #[test]
    fn conv_matches_naive_loops() {
        let mut rng = crate::seed::stream_rng(5, 0);
        use rand::Rng;
        let input =
            Array4::from_shape_simple_fn((3, 5, 5, 5), || rng.random_range(-1.0..1.0f32));
        let kernel =
            Array5::from_shape_simple_fn((4, 3, 3, 3, 3), || rng.random_range(-1.0..1.0f32));
        let bias = Array1::from_shape_simple_fn(4, || rng.random_range(-0.5..0.5f32));
        let fast = conv3d_forward(&input, &kernel, &bias, false);
        let mut naive = Array4::<f32>::zeros((4, 3, 3, 3));
        for oc in 0..4 {
            for z in 0..3 {
                for y in 0..3 {
                    for x in 0..3 {
                        let mut acc = bias[oc];
                        for ic in 0..3 {
                            for kz in 0..3 {
                                for ky in 0..3 {
                                    for kx in 0..3 {
                                        acc += kernel[[oc, ic, kz, ky, kx]]
                                            * input[[ic, z + kz, y + ky, x + kx]];
                                    }
                                }
                            }
                        }
                        naive[[oc, z, y, x]] = acc;
                    }
                }
            }
        }
        for (a, b) in fast.iter().zip(naive.iter()) {
            assert!((a - b).abs() < 1e-4, "{a} vs {b}");
        }
    }

    #[test]
    fn relu_clamps_negatives() {
        let input = Array4::from_elem((1, 1, 1, 2), 1.0f32);
        let kernel = Array5::from_elem((1, 1, 1, 1, 1), -2.0f32);
        let bias = Array1::zeros(1);
        let out = conv3d_forward(&input, &kernel, &bias, true);
        assert!(out.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn maxpool_picks_window_max_and_routes_gradient() {
        let mut input = Array4::<f32>::zeros((1, 2, 2, 2));
        input[[0, 1, 0, 1]] = 5.0;
        let out = maxpool_forward(&input, 2);
        assert_eq!(out.dim(), (1, 1, 1, 1));
        assert_eq!(out[[0, 0, 0, 0]], 5.0);
        let grad = Array4::from_elem((1, 1, 1, 1), 2.0f32);
        let di = maxpool_backward(&input, 2, &grad);
        assert_eq!(di[[0, 1, 0, 1]], 2.0);
        assert_eq!(di.iter().filter(|v| **v != 0.0).count(), 1);
    }

    #[test]
    fn global_mean_matches_hand_computation() {
        let input = Array4::from_shape_fn((2, 1, 1, 2), |(c, _, _, x)| (c * 10 + x) as f32);
        let m = global_mean(&input);
        assert_eq!(m, vec![0.5, 10.5]);
        let back = global_mean_backward(input.raw_dim(), &[2.0, 4.0]);
        assert_eq!(back[[0, 0, 0, 0]], 1.0);
        assert_eq!(back[[1, 0, 0, 1]], 2.0);
    }
}
