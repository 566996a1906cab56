//! Dense kernels on row-major `f32` buffers.

/// `C = beta·C + A·B` where `A` is `m×k` (or `k×m` if `ta`) and `B` is
/// `k×n` (or `n×k` if `tb`).
#[allow(clippy::too_many_arguments)]
pub fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f32],
    ta: bool,
    b: &[f32],
    tb: bool,
    beta: f32,
    c: &mut [f32],
) {
    debug_assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
    if m == 0 || n == 0 {
        return;
    }
    let (rsa, csa) = if ta { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if tb { (1, k as isize) } else { (n as isize, 1) };
    // SAFETY: the buffers hold at least m·k, k·n and m·n elements as asserted
    // above, and the strides describe exactly those row-major layouts.
    unsafe {
        matrixmultiply::sgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// `y = W·x + b` for `W` of shape `out×in`.
pub fn affine(w: &[f32], b: &[f32], x: &[f32], out: usize) -> Vec<f32> {
    let mut y = b[..out].to_vec();
    gemm(out, x.len(), 1, w, false, x, false, 1.0, &mut y);
    y
}

/// `dx = Wᵀ·dy`.
pub fn affine_backward_input(w: &[f32], dy: &[f32], input: usize) -> Vec<f32> {
    let mut dx = vec![0.0; input];
    gemm(input, dy.len(), 1, w, true, dy, false, 0.0, &mut dx);
    dx
}

#[inline]
pub fn sigmoid(x: f32) -> f32 {
    1.0 / (1.0 + (-x).exp())
}

/// Unfolds a `c×h×w` input into `(c·9)×(h·w)` patches for a 3×3 kernel with
/// zero padding 1.
pub fn im2col3(input: &[f32], c: usize, h: usize, w: usize) -> Vec<f32> {
    let hw = h * w;
    let mut cols = vec![0.0; c * 9 * hw];
    for ch in 0..c {
        let plane = &input[ch * hw..(ch + 1) * hw];
        for ky in 0..3 {
            for kx in 0..3 {
                let row = &mut cols[((ch * 9) + ky * 3 + kx) * hw..][..hw];
                for y in 0..h {
                    let sy = y as isize + ky as isize - 1;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    let src = &plane[sy as usize * w..][..w];
                    let dst = &mut row[y * w..][..w];
                    let (x0, x1) = match kx {
                        0 => (1, w),
                        1 => (0, w),
                        _ => (0, w.saturating_sub(1)),
                    };
                    for x in x0..x1 {
                        dst[x] = src[(x as isize + kx as isize - 1) as usize];
                    }
                }
            }
        }
    }
    cols
}

/// Adjoint of `im2col3`.
pub fn col2im3(cols: &[f32], c: usize, h: usize, w: usize) -> Vec<f32> {
    let hw = h * w;
    let mut out = vec![0.0; c * hw];
    for ch in 0..c {
        let plane = &mut out[ch * hw..(ch + 1) * hw];
        for ky in 0..3 {
            for kx in 0..3 {
                let row = &cols[((ch * 9) + ky * 3 + kx) * hw..][..hw];
                for y in 0..h {
                    let sy = y as isize + ky as isize - 1;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    let (x0, x1) = match kx {
                        0 => (1, w),
                        1 => (0, w),
                        _ => (0, w.saturating_sub(1)),
                    };
                    for x in x0..x1 {
                        plane[sy as usize * w + (x as isize + kx as isize - 1) as usize] +=
                            row[y * w + x];
                    }
                }
            }
        }
    }
    out
}

/// 2×2 average pooling with stride 2 (odd trailing rows/columns dropped).
pub fn avgpool2(input: &[f32], c: usize, h: usize, w: usize) -> Vec<f32> {
    let (oh, ow) = (h / 2, w / 2);
    let mut out = vec![0.0; c * oh * ow];
    for ch in 0..c {
        let src = &input[ch * h * w..];
        for y in 0..oh {
            for x in 0..ow {
                let s = src[2 * y * w + 2 * x]
                    + src[2 * y * w + 2 * x + 1]
                    + src[(2 * y + 1) * w + 2 * x]
                    + src[(2 * y + 1) * w + 2 * x + 1];
                out[ch * oh * ow + y * ow + x] = 0.25 * s;
            }
        }
    }
    out
}

pub fn avgpool2_backward(dout: &[f32], c: usize, h: usize, w: usize) -> Vec<f32> {
    let (oh, ow) = (h / 2, w / 2);
    let mut din = vec![0.0; c * h * w];
    for ch in 0..c {
        for y in 0..oh {
            for x in 0..ow {
                let g = 0.25 * dout[ch * oh * ow + y * ow + x];
                let base = ch * h * w;
                din[base + 2 * y * w + 2 * x] = g;
                din[base + 2 * y * w + 2 * x + 1] = g;
                din[base + (2 * y + 1) * w + 2 * x] = g;
                din[base + (2 * y + 1) * w + 2 * x + 1] = g;
            }
        }
    }
    din
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gemm_matches_naive_with_transposes() {
        let (m, k, n) = (3, 4, 2);
        let a: Vec<f32> = (0..m * k).map(|i| i as f32 * 0.5 - 1.0).collect();
        let b: Vec<f32> = (0..k * n).map(|i| (i as f32).sin()).collect();
        let naive = |i: usize, j: usize| (0..k).map(|p| a[i * k + p] * b[p * n + j]).sum::<f32>();
        let mut c = vec![0.0; m * n];
        gemm(m, k, n, &a, false, &b, false, 0.0, &mut c);
        for i in 0..m {
            for j in 0..n {
                assert!((c[i * n + j] - naive(i, j)).abs() < 1e-5);
            }
        }
        let at: Vec<f32> = (0..k * m).map(|idx| a[(idx % m) * k + idx / m]).collect();
        let bt: Vec<f32> = (0..n * k).map(|idx| b[(idx % k) * n + idx / k]).collect();
        let mut c2 = vec![0.0; m * n];
        gemm(m, k, n, &at, true, &bt, true, 0.0, &mut c2);
        for (x, y) in c.iter().zip(&c2) {
            assert!((x - y).abs() < 1e-5);
        }
    }

    #[test]
    fn col2im_is_adjoint_of_im2col() {
        let (c, h, w) = (2, 5, 4);
        let x: Vec<f32> = (0..c * h * w).map(|i| ((i * 7) % 11) as f32 - 5.0).collect();
        let y: Vec<f32> = (0..c * 9 * h * w).map(|i| ((i * 3) % 7) as f32 - 3.0).collect();
        let lhs: f32 = im2col3(&x, c, h, w).iter().zip(&y).map(|(a, b)| a * b).sum();
        let rhs: f32 = x.iter().zip(col2im3(&y, c, h, w)).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-3);
    }

    #[test]
    fn pool_backward_is_adjoint() {
        let (c, h, w) = (2, 4, 6);
        let x: Vec<f32> = (0..c * h * w).map(|i| i as f32).collect();
        let dy: Vec<f32> = (0..c * 2 * 3).map(|i| 1.0 - i as f32 * 0.1).collect();
        let lhs: f32 = avgpool2(&x, c, h, w).iter().zip(&dy).map(|(a, b)| a * b).sum();
        let rhs: f32 = x.iter().zip(avgpool2_backward(&dy, c, h, w)).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-3);
    }
}
