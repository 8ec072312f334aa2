//! Fixed separable resamplers used for the skip path and the upsampler
//! ablation.
//!
//! Both use half-pixel alignment: output sample `i` of `n_out` reads the
//! source at continuous index `(i + 0.5)·n_in/n_out − 0.5`, which is the
//! same pixel-centre convention as [`crate::grid`].
//!
//! Bicubic uses the Keys kernel with `a = −0.5` over four taps; taps that
//! fall outside the raster are reflected about the edge pixel without
//! repeating it (`−1 → 1`, `n → n−2`). Bilinear clamps the source index.

use crate::error::{Error, Result};
use crate::tensor::{ops, Tensor};

pub const KEYS_A: f64 = -0.5;

/// The Keys cubic convolution kernel.
pub fn keys_kernel(x: f64) -> f64 {
    let a = KEYS_A;
    let x = x.abs();
    if x <= 1.0 {
        ((a + 2.0) * x - (a + 3.0)) * x * x + 1.0
    } else if x < 2.0 {
        ((a * x - 5.0 * a) * x + 8.0 * a) * x - 4.0 * a
    } else {
        0.0
    }
}

fn reflect101(i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as isize - 1);
    let mut i = i.rem_euclid(period);
    if i >= n as isize {
        i = period - i;
    }
    i as usize
}

fn source_coord(i: usize, n_in: usize, n_out: usize) -> f64 {
    (i as f64 + 0.5) * n_in as f64 / n_out as f64 - 0.5
}

/// Row-major `[n_out, n_in]` bicubic interpolation matrix for one axis.
pub fn bicubic_matrix(n_in: usize, n_out: usize) -> Vec<f64> {
    let mut m = vec![0.0; n_out * n_in];
    for i in 0..n_out {
        let x = source_coord(i, n_in, n_out);
        let base = x.floor() as isize;
        for t in base - 1..=base + 2 {
            let w = keys_kernel(x - t as f64);
            if w != 0.0 {
                m[i * n_in + reflect101(t, n_in)] += w;
            }
        }
    }
    m
}

/// Row-major `[n_out, n_in]` bilinear interpolation matrix for one axis.
pub fn bilinear_matrix(n_in: usize, n_out: usize) -> Vec<f64> {
    let mut m = vec![0.0; n_out * n_in];
    for i in 0..n_out {
        let x = source_coord(i, n_in, n_out).clamp(0.0, (n_in - 1) as f64);
        let lo = x.floor() as usize;
        let hi = (lo + 1).min(n_in - 1);
        let f = x - lo as f64;
        m[i * n_in + lo] += 1.0 - f;
        m[i * n_in + hi] += f;
    }
    m
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Interp {
    Bilinear,
    Bicubic,
}

/// Resizes the two trailing axes of `x` by the integer factor `r`.
pub fn upsample(x: &Tensor, r: usize, interp: Interp) -> Result<Tensor> {
    if x.ndim() < 2 || r == 0 {
        return Err(Error::invalid_shape("upsample", format!("need at least 2 axes and r > 0, got {:?}, r = {r}", x.shape())));
    }
    let nd = x.ndim();
    let (h, w) = (x.shape()[nd - 2], x.shape()[nd - 1]);
    let matrix = match interp {
        Interp::Bilinear => bilinear_matrix,
        Interp::Bicubic => bicubic_matrix,
    };
    ops::resample2d(x, &matrix(h, h * r), h * r, &matrix(w, w * r), w * r)
}

/// Bicubic upsampling of an `[h, w, S]` image to `[r·h, r·w, S]`.
pub fn bicubic_upsample(x: &Tensor, r: usize) -> Result<Tensor> {
    upsample_hwc(x, r, Interp::Bicubic)
}

/// Bilinear upsampling of an `[h, w, S]` image to `[r·h, r·w, S]`.
pub fn bilinear_upsample(x: &Tensor, r: usize) -> Result<Tensor> {
    upsample_hwc(x, r, Interp::Bilinear)
}

fn upsample_hwc(x: &Tensor, r: usize, interp: Interp) -> Result<Tensor> {
    if x.ndim() != 3 {
        return Err(Error::invalid_shape("upsample", format!("expected [h, w, S], got {:?}", x.shape())));
    }
    let chw = ops::permute(x, &[2, 0, 1])?;
    ops::permute(&upsample(&chw, r, interp)?, &[1, 2, 0])
}
