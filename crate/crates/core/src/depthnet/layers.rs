//! Layer kernels with hand-written backward passes.
//!
//! Convolutions go through im2col and a single-threaded GEMM, chunked over
//! output rows so that the column buffer stays bounded. Every reduction runs
//! in a fixed order, so results are bitwise reproducible.

use super::tensor::Tensor;

/// Upper bound on column-buffer elements per GEMM call.
const COLUMN_BUDGET: usize = 1 << 21;

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;

/// Output length of a zero-padded convolution with padding `k / 2`.
pub fn conv_out_len(len: usize, kernel: usize, stride: usize) -> usize {
    (len + 2 * (kernel / 2) - kernel) / stride + 1
}

/// `C = A·B + beta·C` with explicit strides (all non-negative).
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    (rsa, csa): (usize, usize),
    b: &[f64],
    (rsb, csb): (usize, usize),
    beta: f64,
    c: &mut [f64],
    (rsc, csc): (usize, usize),
) {
    if m == 0 || n == 0 {
        return;
    }
    let extent = |rows: usize, cols: usize, rs: usize, cs: usize| (rows - 1) * rs + (cols - 1) * cs;
    assert!(k == 0 || extent(m, k, rsa, csa) < a.len());
    assert!(k == 0 || extent(k, n, rsb, csb) < b.len());
    assert!(extent(m, n, rsc, csc) < c.len());
    // SAFETY: the asserts above keep every strided access inside the slices,
    // and `c` is exclusively borrowed so it cannot alias `a` or `b`.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            beta,
            c.as_mut_ptr(),
            rsc as isize,
            csc as isize,
        );
    }
}

#[derive(Debug, Clone, Copy)]
struct ConvShape {
    cin: usize,
    h: usize,
    w: usize,
    k: usize,
    stride: usize,
    pad: usize,
    hout: usize,
    wout: usize,
}

impl ConvShape {
    fn new(x: &Tensor, k: usize, stride: usize) -> Self {
        Self {
            cin: x.c,
            h: x.h,
            w: x.w,
            k,
            stride,
            pad: k / 2,
            hout: conv_out_len(x.h, k, stride),
            wout: conv_out_len(x.w, k, stride),
        }
    }

    fn patch(&self) -> usize {
        self.cin * self.k * self.k
    }

    fn rows_per_chunk(&self) -> usize {
        (COLUMN_BUDGET / (self.patch() * self.wout).max(1)).clamp(1, self.hout)
    }

    /// Valid output columns `[lo, hi)` for kernel column `kx`.
    fn column_range(&self, kx: usize) -> (usize, usize) {
        let lo = (self.pad.saturating_sub(kx)).div_ceil(self.stride).min(self.wout);
        let hi = if self.w - 1 + self.pad < kx {
            0
        } else {
            ((self.w - 1 + self.pad - kx) / self.stride + 1).min(self.wout)
        };
        (lo, hi.max(lo))
    }

    fn input_row(&self, oy: usize, ky: usize) -> Option<usize> {
        let iy = (oy * self.stride + ky).checked_sub(self.pad)?;
        (iy < self.h).then_some(iy)
    }
}

fn im2col(s: &ConvShape, x: &[f64], y0: usize, y1: usize, cols: &mut [f64]) {
    let np = (y1 - y0) * s.wout;
    for ci in 0..s.cin {
        let chan = &x[ci * s.h * s.w..(ci + 1) * s.h * s.w];
        for ky in 0..s.k {
            for kx in 0..s.k {
                let row = (ci * s.k + ky) * s.k + kx;
                let dst = &mut cols[row * np..(row + 1) * np];
                let (lo, hi) = s.column_range(kx);
                for (r, oy) in (y0..y1).enumerate() {
                    let d = &mut dst[r * s.wout..(r + 1) * s.wout];
                    let Some(iy) = s.input_row(oy, ky) else {
                        d.fill(0.0);
                        continue;
                    };
                    let src = &chan[iy * s.w..(iy + 1) * s.w];
                    d[..lo].fill(0.0);
                    d[hi..].fill(0.0);
                    if hi == lo {
                        continue;
                    }
                    let offset = lo * s.stride + kx - s.pad;
                    if s.stride == 1 {
                        d[lo..hi].copy_from_slice(&src[offset..offset + hi - lo]);
                    } else {
                        for (j, v) in d[lo..hi].iter_mut().enumerate() {
                            *v = src[offset + j * s.stride];
                        }
                    }
                }
            }
        }
    }
}

fn col2im_add(s: &ConvShape, cols: &[f64], y0: usize, y1: usize, dx: &mut [f64]) {
    let np = (y1 - y0) * s.wout;
    for ci in 0..s.cin {
        let chan = &mut dx[ci * s.h * s.w..(ci + 1) * s.h * s.w];
        for ky in 0..s.k {
            for kx in 0..s.k {
                let row = (ci * s.k + ky) * s.k + kx;
                let src = &cols[row * np..(row + 1) * np];
                let (lo, hi) = s.column_range(kx);
                for (r, oy) in (y0..y1).enumerate() {
                    let Some(iy) = s.input_row(oy, ky) else {
                        continue;
                    };
                    let d = &src[r * s.wout..(r + 1) * s.wout];
                    if hi == lo {
                        continue;
                    }
                    let dst = &mut chan[iy * s.w..(iy + 1) * s.w];
                    let offset = lo * s.stride + kx - s.pad;
                    for (j, v) in d[lo..hi].iter().enumerate() {
                        dst[offset + j * s.stride] += v;
                    }
                }
            }
        }
    }
}

/// 2-D convolution; `weight` is `[cout, cin, k, k]`, padding `k / 2`.
pub fn conv2d_forward(
    x: &Tensor,
    weight: &[f64],
    bias: &[f64],
    cout: usize,
    k: usize,
    stride: usize,
) -> Tensor {
    let s = ConvShape::new(x, k, stride);
    debug_assert_eq!(weight.len(), cout * s.patch());
    let mut y = Tensor::zeros(x.n, cout, s.hout, s.wout);
    let plane = s.hout * s.wout;
    let chunk = s.rows_per_chunk();
    let mut cols = vec![0.0; s.patch() * chunk * s.wout];
    for i in 0..x.n {
        let xs = x.sample(i);
        let ys = y.sample_mut(i);
        for y0 in (0..s.hout).step_by(chunk) {
            let y1 = (y0 + chunk).min(s.hout);
            let np = (y1 - y0) * s.wout;
            im2col(&s, xs, y0, y1, &mut cols);
            gemm(
                cout,
                s.patch(),
                np,
                weight,
                (s.patch(), 1),
                &cols,
                (np, 1),
                0.0,
                &mut ys[y0 * s.wout..],
                (plane, 1),
            );
        }
        for (co, b) in bias.iter().enumerate() {
            for v in &mut ys[co * plane..(co + 1) * plane] {
                *v += b;
            }
        }
    }
    y
}

/// Accumulates weight and bias gradients into `dw`/`db`; returns the input
/// gradient when `need_dx` is set.
#[allow(clippy::too_many_arguments)]
pub fn conv2d_backward(
    x: &Tensor,
    weight: &[f64],
    cout: usize,
    k: usize,
    stride: usize,
    dy: &Tensor,
    dw: &mut [f64],
    db: &mut [f64],
    need_dx: bool,
) -> Option<Tensor> {
    let s = ConvShape::new(x, k, stride);
    let plane = s.hout * s.wout;
    let chunk = s.rows_per_chunk();
    let mut cols = vec![0.0; s.patch() * chunk * s.wout];
    let mut dx = need_dx.then(|| Tensor::zeros(x.n, x.c, x.h, x.w));
    for i in 0..x.n {
        let xs = x.sample(i);
        let dys = dy.sample(i);
        for (co, g) in db.iter_mut().enumerate() {
            *g += dys[co * plane..(co + 1) * plane].iter().sum::<f64>();
        }
        for y0 in (0..s.hout).step_by(chunk) {
            let y1 = (y0 + chunk).min(s.hout);
            let np = (y1 - y0) * s.wout;
            im2col(&s, xs, y0, y1, &mut cols);
            // dW += dY · colsᵀ
            gemm(
                cout,
                np,
                s.patch(),
                &dys[y0 * s.wout..],
                (plane, 1),
                &cols,
                (1, np),
                1.0,
                dw,
                (s.patch(), 1),
            );
            if let Some(dx) = dx.as_mut() {
                // dcols = Wᵀ · dY
                gemm(
                    s.patch(),
                    cout,
                    np,
                    weight,
                    (1, s.patch()),
                    &dys[y0 * s.wout..],
                    (plane, 1),
                    0.0,
                    &mut cols,
                    (np, 1),
                );
                col2im_add(&s, &cols, y0, y1, dx.sample_mut(i));
            }
        }
    }
    dx
}

/// Per-channel normalization state kept for the backward pass.
#[derive(Debug, Clone)]
pub struct BnCache {
    pub xhat: Vec<f64>,
    pub invstd: Vec<f64>,
    /// Batch statistics (mean, biased variance); `None` in inference mode.
    pub batch_stats: Option<(Vec<f64>, Vec<f64>)>,
}

fn for_channel(x: &Tensor, c: usize, mut f: impl FnMut(&[f64])) {
    for i in 0..x.n {
        f(x.channel(i, c));
    }
}

/// Training-mode batch normalization, in place.
pub fn batchnorm_train(x: &mut Tensor, gamma: &[f64], beta: &[f64]) -> BnCache {
    let count = (x.n * x.plane()) as f64;
    let mut means = vec![0.0; x.c];
    let mut vars = vec![0.0; x.c];
    for c in 0..x.c {
        let mut sum = 0.0;
        for_channel(x, c, |v| sum += v.iter().sum::<f64>());
        let mean = sum / count;
        let mut sq = 0.0;
        for_channel(x, c, |v| sq += v.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>());
        means[c] = mean;
        vars[c] = sq / count;
    }
    let invstd: Vec<f64> = vars.iter().map(|v| 1.0 / (v + BN_EPS).sqrt()).collect();
    let xhat = normalize(x, &means, &invstd, gamma, beta);
    BnCache {
        xhat,
        invstd,
        batch_stats: Some((means, vars)),
    }
}

/// Inference-mode batch normalization with running statistics, in place.
pub fn batchnorm_eval(
    x: &mut Tensor,
    gamma: &[f64],
    beta: &[f64],
    running_mean: &[f64],
    running_var: &[f64],
) -> BnCache {
    let invstd: Vec<f64> = running_var.iter().map(|v| 1.0 / (v + BN_EPS).sqrt()).collect();
    let xhat = normalize(x, running_mean, &invstd, gamma, beta);
    BnCache {
        xhat,
        invstd,
        batch_stats: None,
    }
}

fn normalize(x: &mut Tensor, mean: &[f64], invstd: &[f64], gamma: &[f64], beta: &[f64]) -> Vec<f64> {
    let mut xhat = vec![0.0; x.data.len()];
    let p = x.plane();
    for (chunk_idx, (v, h)) in x
        .data
        .chunks_exact_mut(p)
        .zip(xhat.chunks_exact_mut(p))
        .enumerate()
    {
        let c = chunk_idx % x.c;
        for (a, b) in v.iter_mut().zip(h.iter_mut()) {
            *b = (*a - mean[c]) * invstd[c];
            *a = gamma[c] * *b + beta[c];
        }
    }
    xhat
}

/// Folds a batch's statistics into running estimates (unbiased variance).
pub fn update_running_stats(
    running_mean: &mut [f64],
    running_var: &mut [f64],
    batch_mean: &[f64],
    batch_var: &[f64],
    count: usize,
) {
    let correction = if count > 1 {
        count as f64 / (count - 1) as f64
    } else {
        1.0
    };
    for c in 0..running_mean.len() {
        running_mean[c] = (1.0 - BN_MOMENTUM) * running_mean[c] + BN_MOMENTUM * batch_mean[c];
        running_var[c] =
            (1.0 - BN_MOMENTUM) * running_var[c] + BN_MOMENTUM * batch_var[c] * correction;
    }
}

/// Backward through batch normalization, in place on `dy`.
pub fn batchnorm_backward(
    dy: &mut Tensor,
    cache: &BnCache,
    gamma: &[f64],
    dgamma: &mut [f64],
    dbeta: &mut [f64],
) {
    let p = dy.plane();
    let channels = dy.c;
    let mut sum_dy = vec![0.0; channels];
    let mut sum_dy_xhat = vec![0.0; channels];
    for (idx, (g, h)) in dy
        .data
        .chunks_exact(p)
        .zip(cache.xhat.chunks_exact(p))
        .enumerate()
    {
        let c = idx % channels;
        sum_dy[c] += g.iter().sum::<f64>();
        sum_dy_xhat[c] += g.iter().zip(h).map(|(a, b)| a * b).sum::<f64>();
    }
    for c in 0..channels {
        dgamma[c] += sum_dy_xhat[c];
        dbeta[c] += sum_dy[c];
    }
    let count = (dy.n * p) as f64;
    let training = cache.batch_stats.is_some();
    for (idx, (g, h)) in dy
        .data
        .chunks_exact_mut(p)
        .zip(cache.xhat.chunks_exact(p))
        .enumerate()
    {
        let c = idx % channels;
        let scale = gamma[c] * cache.invstd[c];
        if training {
            let mean_dy = sum_dy[c] / count;
            let mean_dy_xhat = sum_dy_xhat[c] / count;
            for (a, b) in g.iter_mut().zip(h) {
                *a = scale * (*a - mean_dy - b * mean_dy_xhat);
            }
        } else {
            for a in g.iter_mut() {
                *a *= scale;
            }
        }
    }
}

pub fn relu_in_place(x: &mut Tensor) {
    for v in &mut x.data {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
}

/// Masks `dy` where the ReLU output was not positive.
pub fn relu_backward(dy: &mut Tensor, output: &Tensor) {
    for (g, y) in dy.data.iter_mut().zip(&output.data) {
        if *y <= 0.0 {
            *g = 0.0;
        }
    }
}

fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `scale · sigmoid(x)`.
pub fn scaled_sigmoid(x: &Tensor, scale: f64) -> Tensor {
    Tensor {
        data: x.data.iter().map(|&v| scale * logistic(v)).collect(),
        ..*x
    }
}

/// Backward of [`scaled_sigmoid`] given its output `y`.
pub fn scaled_sigmoid_backward(dy: &Tensor, y: &Tensor, scale: f64) -> Tensor {
    Tensor {
        data: dy
            .data
            .iter()
            .zip(&y.data)
            .map(|(g, v)| {
                let s = v / scale;
                g * scale * s * (1.0 - s)
            })
            .collect(),
        ..*dy
    }
}

/// Source taps for one output coordinate, half-pixel-center convention.
fn bilinear_taps(dst: usize, in_len: usize, out_len: usize) -> (usize, usize, f64) {
    let scale = in_len as f64 / out_len as f64;
    let src = (scale * (dst as f64 + 0.5) - 0.5).max(0.0);
    let i0 = (src as usize).min(in_len - 1);
    let i1 = if i0 < in_len - 1 { i0 + 1 } else { i0 };
    (i0, i1, src - i0 as f64)
}

/// Bilinear resize to `oh × ow` (corners not aligned).
pub fn resize_bilinear(x: &Tensor, oh: usize, ow: usize) -> Tensor {
    let mut y = Tensor::zeros(x.n, x.c, oh, ow);
    let rows: Vec<_> = (0..oh).map(|r| bilinear_taps(r, x.h, oh)).collect();
    let cols: Vec<_> = (0..ow).map(|c| bilinear_taps(c, x.w, ow)).collect();
    for i in 0..x.n {
        for c in 0..x.c {
            let src = x.channel(i, c);
            let dst = y.channel_mut(i, c);
            for (oy, &(y0, y1, ly)) in rows.iter().enumerate() {
                for (ox, &(x0, x1, lx)) in cols.iter().enumerate() {
                    let top = (1.0 - lx) * src[y0 * x.w + x0] + lx * src[y0 * x.w + x1];
                    let bottom = (1.0 - lx) * src[y1 * x.w + x0] + lx * src[y1 * x.w + x1];
                    dst[oy * ow + ox] = (1.0 - ly) * top + ly * bottom;
                }
            }
        }
    }
    y
}

/// Adjoint of [`resize_bilinear`] back to `ih × iw`.
pub fn resize_bilinear_backward(dy: &Tensor, ih: usize, iw: usize) -> Tensor {
    let mut dx = Tensor::zeros(dy.n, dy.c, ih, iw);
    let rows: Vec<_> = (0..dy.h).map(|r| bilinear_taps(r, ih, dy.h)).collect();
    let cols: Vec<_> = (0..dy.w).map(|c| bilinear_taps(c, iw, dy.w)).collect();
    for i in 0..dy.n {
        for c in 0..dy.c {
            let g = dy.channel(i, c);
            let dst = dx.channel_mut(i, c);
            for (oy, &(y0, y1, ly)) in rows.iter().enumerate() {
                for (ox, &(x0, x1, lx)) in cols.iter().enumerate() {
                    let v = g[oy * dy.w + ox];
                    dst[y0 * iw + x0] += (1.0 - ly) * (1.0 - lx) * v;
                    dst[y0 * iw + x1] += (1.0 - ly) * lx * v;
                    dst[y1 * iw + x0] += ly * (1.0 - lx) * v;
                    dst[y1 * iw + x1] += ly * lx * v;
                }
            }
        }
    }
    dx
}

/// Channel concatenation of equally sized tensors.
pub fn concat(parts: &[&Tensor]) -> Tensor {
    let first = parts[0];
    let c: usize = parts.iter().map(|t| t.c).sum();
    let mut y = Tensor::zeros(first.n, c, first.h, first.w);
    for i in 0..first.n {
        let mut offset = 0;
        let dst = y.sample_mut(i);
        for t in parts {
            let src = t.sample(i);
            dst[offset..offset + src.len()].copy_from_slice(src);
            offset += src.len();
        }
    }
    y
}

/// Splits a concatenated gradient back into per-part gradients.
pub fn split_channels(dy: &Tensor, channels: &[usize]) -> Vec<Tensor> {
    let plane = dy.plane();
    let mut out: Vec<Tensor> = channels
        .iter()
        .map(|&c| Tensor::zeros(dy.n, c, dy.h, dy.w))
        .collect();
    for i in 0..dy.n {
        let src = dy.sample(i);
        let mut offset = 0;
        for t in &mut out {
            let len = t.c * plane;
            t.sample_mut(i).copy_from_slice(&src[offset..offset + len]);
            offset += len;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Direct-loop convolution used as an oracle.
    fn conv_naive(x: &Tensor, w: &[f64], b: &[f64], cout: usize, k: usize, s: usize) -> Tensor {
        let pad = (k / 2) as isize;
        let (ho, wo) = (conv_out_len(x.h, k, s), conv_out_len(x.w, k, s));
        let mut y = Tensor::zeros(x.n, cout, ho, wo);
        for i in 0..x.n {
            for co in 0..cout {
                for oy in 0..ho {
                    for ox in 0..wo {
                        let mut acc = b[co];
                        for ci in 0..x.c {
                            for ky in 0..k {
                                for kx in 0..k {
                                    let iy = (oy * s + ky) as isize - pad;
                                    let ix = (ox * s + kx) as isize - pad;
                                    if iy < 0 || ix < 0 || iy >= x.h as isize || ix >= x.w as isize {
                                        continue;
                                    }
                                    acc += w[((co * x.c + ci) * k + ky) * k + kx]
                                        * x.channel(i, ci)[iy as usize * x.w + ix as usize];
                                }
                            }
                        }
                        y.channel_mut(i, co)[oy * wo + ox] = acc;
                    }
                }
            }
        }
        y
    }

    fn pseudo(n: usize, seed: u64) -> Vec<f64> {
        (0..n)
            .map(|i| (((i as u64 + 1).wrapping_mul(seed) % 1000) as f64) / 500.0 - 1.0)
            .collect()
    }

    #[test]
    fn conv_matches_direct_loops() {
        for &(h, w, k, s) in &[(7, 5, 3, 1), (8, 6, 5, 2), (9, 9, 7, 2), (3, 4, 7, 1), (1, 1, 3, 2)] {
            let x = Tensor::from_data(2, 3, h, w, pseudo(2 * 3 * h * w, 7919)).unwrap();
            let wt = pseudo(4 * 3 * k * k, 104_729);
            let b = vec![0.1, -0.2, 0.3, 0.0];
            let fast = conv2d_forward(&x, &wt, &b, 4, k, s);
            let slow = conv_naive(&x, &wt, &b, 4, k, s);
            assert_eq!(fast.shape(), slow.shape());
            for (a, b) in fast.data.iter().zip(&slow.data) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn stride_two_output_is_ceil_half() {
        for len in 1..20 {
            for k in [3, 5, 7] {
                assert_eq!(conv_out_len(len, k, 2), len.div_ceil(2));
                assert_eq!(conv_out_len(len, k, 1), len);
            }
        }
    }

    #[test]
    fn conv_backward_is_adjoint() {
        // <conv(x), g> is bilinear, so dW·W and dx·x each reproduce it.
        let (h, w, k, s) = (6, 5, 3, 2);
        let x = Tensor::from_data(1, 2, h, w, pseudo(2 * h * w, 31)).unwrap();
        let wt = pseudo(3 * 2 * k * k, 17);
        let zero_b = vec![0.0; 3];
        let y = conv2d_forward(&x, &wt, &zero_b, 3, k, s);
        let g = Tensor::from_data(1, 3, y.h, y.w, pseudo(y.data.len(), 13)).unwrap();
        let inner: f64 = y.data.iter().zip(&g.data).map(|(a, b)| a * b).sum();
        let mut dw = vec![0.0; wt.len()];
        let mut db = vec![0.0; 3];
        let dx = conv2d_backward(&x, &wt, 3, k, s, &g, &mut dw, &mut db, true).unwrap();
        let via_w: f64 = dw.iter().zip(&wt).map(|(a, b)| a * b).sum();
        let via_x: f64 = dx.data.iter().zip(&x.data).map(|(a, b)| a * b).sum();
        assert!((via_w - inner).abs() < 1e-10);
        assert!((via_x - inner).abs() < 1e-10);
        let gsum: Vec<f64> = (0..3).map(|c| g.channel(0, c).iter().sum()).collect();
        assert_eq!(db, gsum);
    }

    #[test]
    fn resize_backward_is_adjoint() {
        for &(ih, iw, oh, ow) in &[(2, 2, 4, 3), (3, 5, 6, 10), (4, 4, 4, 4), (1, 1, 3, 2)] {
            let x = Tensor::from_data(1, 2, ih, iw, pseudo(2 * ih * iw, 3)).unwrap();
            let g = Tensor::from_data(1, 2, oh, ow, pseudo(2 * oh * ow, 5)).unwrap();
            let y = resize_bilinear(&x, oh, ow);
            let dx = resize_bilinear_backward(&g, ih, iw);
            let lhs: f64 = y.data.iter().zip(&g.data).map(|(a, b)| a * b).sum();
            let rhs: f64 = dx.data.iter().zip(&x.data).map(|(a, b)| a * b).sum();
            assert!((lhs - rhs).abs() < 1e-12);
        }
    }

    #[test]
    fn resize_half_pixel_convention() {
        // 2 → 4 with corners not aligned: taps at -0.25 (clamped), 0.25, 0.75, 1.25.
        let x = Tensor::from_data(1, 1, 1, 2, vec![0.0, 1.0]).unwrap();
        let y = resize_bilinear(&x, 1, 4);
        assert_eq!(y.data, vec![0.0, 0.25, 0.75, 1.0]);
        let same = resize_bilinear(&x, 1, 2);
        assert_eq!(same.data, x.data);
    }

    #[test]
    fn batchnorm_eval_with_unit_stats_is_identity() {
        // y = x / sqrt(1 + eps) deviates by about 5e-6 |x|.
        let data = pseudo(24, 11).into_iter().map(|v| 0.2 * v).collect();
        let mut x = Tensor::from_data(2, 3, 2, 2, data).unwrap();
        let orig = x.clone();
        let ones = vec![1.0; 3];
        let zeros = vec![0.0; 3];
        batchnorm_eval(&mut x, &ones, &zeros, &zeros, &ones);
        for (a, b) in x.data.iter().zip(&orig.data) {
            assert!((a - b).abs() < 1e-5 * b.abs().max(1.0));
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn batchnorm_train_normalizes() {
        let mut x = Tensor::from_data(2, 2, 3, 3, pseudo(36, 97)).unwrap();
        batchnorm_train(&mut x, &[1.0, 2.0], &[0.0, 0.5]);
        for c in 0..2 {
            let vals: Vec<f64> = (0..2).flat_map(|i| x.channel(i, c).to_vec()).collect();
            let mean = vals.iter().sum::<f64>() / vals.len() as f64;
            assert!((mean - [0.0, 0.5][c]).abs() < 1e-12);
        }
    }

    #[test]
    fn concat_split_roundtrip() {
        let a = Tensor::from_data(2, 1, 2, 2, pseudo(8, 3)).unwrap();
        let b = Tensor::from_data(2, 3, 2, 2, pseudo(24, 5)).unwrap();
        let cat = concat(&[&a, &b]);
        assert_eq!(cat.c, 4);
        let parts = split_channels(&cat, &[1, 3]);
        assert_eq!(parts[0], a);
        assert_eq!(parts[1], b);
    }

    #[test]
    fn sigmoid_of_zero_is_half_scale() {
        let x = Tensor::zeros(1, 1, 2, 2);
        assert!(scaled_sigmoid(&x, 2.0).data.iter().all(|&v| v == 1.0));
    }
}
