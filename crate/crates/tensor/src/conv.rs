//! 2-d convolution kernels built on im2col and a dense GEMM.
//!
//! Weights are `[out_channels, in_channels, k, k]`, inputs NCHW, zero padding.

/// Geometry of one convolution.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvGeometry {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
    pub in_h: usize,
    pub in_w: usize,
}

impl ConvGeometry {
    pub fn out_h(&self) -> usize {
        (self.in_h + 2 * self.padding - self.kernel) / self.stride + 1
    }

    pub fn out_w(&self) -> usize {
        (self.in_w + 2 * self.padding - self.kernel) / self.stride + 1
    }

    fn patch_len(&self) -> usize {
        self.in_channels * self.kernel * self.kernel
    }

    fn out_pixels(&self) -> usize {
        self.out_h() * self.out_w()
    }
}

/// C = A (m×k) · B (k×n), row-major with explicit strides, `beta` scales the old C.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    (rsa, csa): (isize, isize),
    b: &[f64],
    (rsb, csb): (isize, isize),
    beta: f64,
    c: &mut [f64],
) {
    assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
    // SAFETY: bounds checked above; strides describe dense row- or column-major views
    // of exactly m×k, k×n and m×n elements.
    unsafe {
        matrixmultiply::dgemm(
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

fn im2col(geo: &ConvGeometry, input: &[f64], cols: &mut [f64]) {
    let (oh, ow) = (geo.out_h(), geo.out_w());
    let p = oh * ow;
    let k = geo.kernel;
    for c in 0..geo.in_channels {
        let plane = &input[c * geo.in_h * geo.in_w..(c + 1) * geo.in_h * geo.in_w];
        for ky in 0..k {
            for kx in 0..k {
                let row = (c * k + ky) * k + kx;
                let dst = &mut cols[row * p..(row + 1) * p];
                for oy in 0..oh {
                    let iy = (oy * geo.stride + ky) as isize - geo.padding as isize;
                    let line = &mut dst[oy * ow..(oy + 1) * ow];
                    if iy < 0 || iy >= geo.in_h as isize {
                        line.fill(0.0);
                        continue;
                    }
                    let src = &plane[iy as usize * geo.in_w..(iy as usize + 1) * geo.in_w];
                    for (ox, v) in line.iter_mut().enumerate() {
                        let ix = (ox * geo.stride + kx) as isize - geo.padding as isize;
                        *v = if ix < 0 || ix >= geo.in_w as isize {
                            0.0
                        } else {
                            src[ix as usize]
                        };
                    }
                }
            }
        }
    }
}

fn col2im(geo: &ConvGeometry, cols: &[f64], grad_input: &mut [f64]) {
    let (oh, ow) = (geo.out_h(), geo.out_w());
    let p = oh * ow;
    let k = geo.kernel;
    for c in 0..geo.in_channels {
        let plane = &mut grad_input[c * geo.in_h * geo.in_w..(c + 1) * geo.in_h * geo.in_w];
        for ky in 0..k {
            for kx in 0..k {
                let row = (c * k + ky) * k + kx;
                let src = &cols[row * p..(row + 1) * p];
                for oy in 0..oh {
                    let iy = (oy * geo.stride + ky) as isize - geo.padding as isize;
                    if iy < 0 || iy >= geo.in_h as isize {
                        continue;
                    }
                    let base = iy as usize * geo.in_w;
                    for ox in 0..ow {
                        let ix = (ox * geo.stride + kx) as isize - geo.padding as isize;
                        if ix >= 0 && ix < geo.in_w as isize {
                            plane[base + ix as usize] += src[oy * ow + ox];
                        }
                    }
                }
            }
        }
    }
}

/// Forward convolution of a batch of `n` samples.
pub fn forward(
    geo: &ConvGeometry,
    n: usize,
    input: &[f64],
    weight: &[f64],
    bias: Option<&[f64]>,
) -> Vec<f64> {
    let kk = geo.patch_len();
    let p = geo.out_pixels();
    let in_len = geo.in_channels * geo.in_h * geo.in_w;
    let out_len = geo.out_channels * p;
    let mut out = vec![0.0; n * out_len];
    let mut cols = vec![0.0; kk * p];
    for s in 0..n {
        im2col(geo, &input[s * in_len..(s + 1) * in_len], &mut cols);
        let dst = &mut out[s * out_len..(s + 1) * out_len];
        if let Some(b) = bias {
            for (o, row) in dst.chunks_mut(p).enumerate() {
                row.fill(b[o]);
            }
        }
        gemm(
            geo.out_channels,
            kk,
            p,
            weight,
            (kk as isize, 1),
            &cols,
            (p as isize, 1),
            1.0,
            dst,
        );
    }
    out
}

/// Gradients of a convolution. Each output is only computed when requested.
pub struct ConvGrads {
    pub input: Option<Vec<f64>>,
    pub weight: Option<Vec<f64>>,
    pub bias: Option<Vec<f64>>,
}

#[allow(clippy::too_many_arguments)]
pub fn backward(
    geo: &ConvGeometry,
    n: usize,
    input: &[f64],
    weight: &[f64],
    grad_out: &[f64],
    want_input: bool,
    want_weight: bool,
    want_bias: bool,
) -> ConvGrads {
    let kk = geo.patch_len();
    let p = geo.out_pixels();
    let in_len = geo.in_channels * geo.in_h * geo.in_w;
    let out_len = geo.out_channels * p;
    let mut grad_input = want_input.then(|| vec![0.0; n * in_len]);
    let mut grad_weight = want_weight.then(|| vec![0.0; geo.out_channels * kk]);
    let grad_bias = want_bias.then(|| {
        let mut gb = vec![0.0; geo.out_channels];
        for s in 0..n {
            let g = &grad_out[s * out_len..(s + 1) * out_len];
            for (o, row) in g.chunks(p).enumerate() {
                gb[o] += row.iter().sum::<f64>();
            }
        }
        gb
    });
    let mut cols = vec![0.0; kk * p];
    for s in 0..n {
        let g = &grad_out[s * out_len..(s + 1) * out_len];
        if let Some(gw) = grad_weight.as_mut() {
            im2col(geo, &input[s * in_len..(s + 1) * in_len], &mut cols);
            // gW += G (Co×P) · colsᵀ (P×K)
            gemm(
                geo.out_channels,
                p,
                kk,
                g,
                (p as isize, 1),
                &cols,
                (1, p as isize),
                1.0,
                gw,
            );
        }
        if let Some(gi) = grad_input.as_mut() {
            // dcols (K×P) = Wᵀ (K×Co) · G (Co×P)
            gemm(
                kk,
                geo.out_channels,
                p,
                weight,
                (1, kk as isize),
                g,
                (p as isize, 1),
                0.0,
                &mut cols,
            );
            col2im(geo, &cols, &mut gi[s * in_len..(s + 1) * in_len]);
        }
    }
    ConvGrads {
        input: grad_input,
        weight: grad_weight,
        bias: grad_bias,
    }
}
