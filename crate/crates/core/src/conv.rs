//! im2col kernels for stride-1, zero-padded ("same") 2-D convolution.

use crate::tensor::{gemm, Mat};

/// Geometry of a same-padded convolution over a `[batch, channels, height, width]` input.
#[derive(Clone, Copy, Debug)]
pub(crate) struct ConvGeom {
    pub batch: usize,
    pub c_in: usize,
    pub height: usize,
    pub width: usize,
    pub kernel: usize,
}

impl ConvGeom {
    pub fn rows(&self) -> usize {
        self.c_in * self.kernel * self.kernel
    }

    pub fn pixels(&self) -> usize {
        self.height * self.width
    }

    pub fn cols(&self) -> usize {
        self.batch * self.pixels()
    }
}

/// Unfolds `x` into a `[c_in*k*k, batch*h*w]` matrix.
pub(crate) fn im2col(x: &[f64], g: ConvGeom) -> Vec<f64> {
    let (h, w, k) = (g.height, g.width, g.kernel);
    let r = (k / 2) as isize;
    let p = g.pixels();
    let cols = g.cols();
    let mut col = vec![0.0; g.rows() * cols];
    for ci in 0..g.c_in {
        for ky in 0..k {
            for kx in 0..k {
                let row = (ci * k + ky) * k + kx;
                let dy = ky as isize - r;
                let dx = kx as isize - r;
                let x_lo = (-dx).max(0) as usize;
                let x_hi = (w as isize - dx).min(w as isize).max(0) as usize;
                for b in 0..g.batch {
                    let src = &x[(b * g.c_in + ci) * p..(b * g.c_in + ci + 1) * p];
                    let dst = &mut col[row * cols + b * p..row * cols + (b + 1) * p];
                    for y in 0..h {
                        let sy = y as isize + dy;
                        if sy < 0 || sy >= h as isize || x_lo >= x_hi {
                            continue;
                        }
                        let sy = sy as usize;
                        let sx0 = (x_lo as isize + dx) as usize;
                        let n = x_hi - x_lo;
                        dst[y * w + x_lo..y * w + x_hi].copy_from_slice(&src[sy * w + sx0..sy * w + sx0 + n]);
                    }
                }
            }
        }
    }
    col
}

/// Adjoint of [`im2col`]: folds a column matrix back into input layout, summing overlaps.
pub(crate) fn col2im(col: &[f64], g: ConvGeom) -> Vec<f64> {
    let (h, w, k) = (g.height, g.width, g.kernel);
    let r = (k / 2) as isize;
    let p = g.pixels();
    let cols = g.cols();
    let mut x = vec![0.0; g.batch * g.c_in * p];
    for ci in 0..g.c_in {
        for ky in 0..k {
            for kx in 0..k {
                let row = (ci * k + ky) * k + kx;
                let dy = ky as isize - r;
                let dx = kx as isize - r;
                let x_lo = (-dx).max(0) as usize;
                let x_hi = (w as isize - dx).min(w as isize).max(0) as usize;
                for b in 0..g.batch {
                    let src = &col[row * cols + b * p..row * cols + (b + 1) * p];
                    let dst = &mut x[(b * g.c_in + ci) * p..(b * g.c_in + ci + 1) * p];
                    for y in 0..h {
                        let sy = y as isize + dy;
                        if sy < 0 || sy >= h as isize || x_lo >= x_hi {
                            continue;
                        }
                        let sy = sy as usize;
                        let sx0 = (x_lo as isize + dx) as usize;
                        for (i, xi) in (x_lo..x_hi).enumerate() {
                            dst[sy * w + sx0 + i] += src[y * w + xi];
                        }
                    }
                }
            }
        }
    }
    x
}

/// Forward convolution. Returns `(output [batch, c_out, h, w], im2col buffer)`.
pub(crate) fn conv2d_forward(x: &[f64], weight: &[f64], bias: &[f64], c_out: usize, g: ConvGeom) -> (Vec<f64>, Vec<f64>) {
    let col = im2col(x, g);
    let (kk, cols, p) = (g.rows(), g.cols(), g.pixels());
    let mut tmp = vec![0.0; c_out * cols];
    gemm(c_out, kk, cols, 1.0, Mat::row_major(weight, kk), Mat::row_major(&col, cols), 0.0, &mut tmp, cols);
    let mut out = vec![0.0; g.batch * c_out * p];
    for co in 0..c_out {
        for b in 0..g.batch {
            let src = &tmp[co * cols + b * p..co * cols + (b + 1) * p];
            let dst = &mut out[(b * c_out + co) * p..(b * c_out + co + 1) * p];
            for (d, s) in dst.iter_mut().zip(src) {
                *d = s + bias[co];
            }
        }
    }
    (out, col)
}

pub(crate) struct ConvGrads {
    pub dx: Option<Vec<f64>>,
    pub dw: Option<Vec<f64>>,
    pub db: Option<Vec<f64>>,
}

pub(crate) fn conv2d_backward(
    grad: &[f64],
    weight: &[f64],
    col: &[f64],
    c_out: usize,
    g: ConvGeom,
    needs: [bool; 3],
) -> ConvGrads {
    let (kk, cols, p) = (g.rows(), g.cols(), g.pixels());
    // regroup [batch, c_out, p] -> [c_out, batch*p]
    let mut gm = vec![0.0; c_out * cols];
    for b in 0..g.batch {
        for co in 0..c_out {
            gm[co * cols + b * p..co * cols + (b + 1) * p].copy_from_slice(&grad[(b * c_out + co) * p..(b * c_out + co + 1) * p]);
        }
    }
    let dw = needs[1].then(|| {
        let mut dw = vec![0.0; c_out * kk];
        gemm(c_out, cols, kk, 1.0, Mat::row_major(&gm, cols), Mat::transposed(col, cols), 0.0, &mut dw, kk);
        dw
    });
    let db = needs[2].then(|| (0..c_out).map(|co| gm[co * cols..(co + 1) * cols].iter().sum()).collect());
    let dx = needs[0].then(|| {
        let mut dcol = vec![0.0; kk * cols];
        gemm(kk, c_out, cols, 1.0, Mat::transposed(weight, kk), Mat::row_major(&gm, cols), 0.0, &mut dcol, cols);
        col2im(&dcol, g)
    });
    ConvGrads { dx, dw, db }
}
