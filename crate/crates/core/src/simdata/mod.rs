//! Degradation simulation following the Wald protocol, plus the cube type
//! and its on-disk format.
//!
//! A ground-truth cube `GT` yields the two network inputs:
//!
//! ```text
//! LR-HSI = downsample(gaussian_blur(GT), r)
//! HR-MSI = apply_srf(GT, srf)
//! ```

mod cube;
mod io;
mod srf;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub use cube::HsiCube;
pub use io::{decode_cube, encode_cube, encode_pgm, load_cube, save_cube, CUBE_MAGIC, CUBE_VERSION};
pub use srf::{load_srf, parse_srf, SpectralResponse};

use crate::error::{Error, Result};

/// Sampled, normalized `size×size` Gaussian, row-major.
pub fn gaussian_kernel(size: usize, sigma: f64) -> Result<Vec<f64>> {
    if size.is_multiple_of(2) {
        return Err(Error::InvalidArgument(format!("blur kernel size must be odd, got {size}")));
    }
    if sigma <= 0.0 || !sigma.is_finite() {
        return Err(Error::InvalidArgument(format!("blur sigma must be positive, got {sigma}")));
    }
    let half = (size / 2) as isize;
    let mut k = Vec::with_capacity(size * size);
    for y in -half..=half {
        for x in -half..=half {
            k.push((-((x * x + y * y) as f64) / (2.0 * sigma * sigma)).exp());
        }
    }
    let total: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= total);
    Ok(k)
}

/// Mirror index about the edge sample without repeating it.
fn reflect101(i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as isize - 1);
    let i = i.rem_euclid(period);
    (if i >= n as isize { period - i } else { i }) as usize
}

/// Per-band convolution with a sampled Gaussian, reflected borders.
pub fn gaussian_blur(cube: &HsiCube, size: usize, sigma: f64) -> Result<HsiCube> {
    let k = gaussian_kernel(size, sigma)?;
    let (h, w, bands) = cube.shape();
    let half = (size / 2) as isize;
    let mut out = vec![0.0; cube.data().len()];
    for i in 0..h {
        for j in 0..w {
            let dst = &mut out[(i * w + j) * bands..(i * w + j + 1) * bands];
            for (t, &kv) in k.iter().enumerate() {
                let di = (t / size) as isize - half;
                let dj = (t % size) as isize - half;
                let src = cube.pixel(reflect101(i as isize + di, h), reflect101(j as isize + dj, w));
                for (d, s) in dst.iter_mut().zip(src) {
                    *d += kv * s;
                }
            }
        }
    }
    cube.with_data(out)
}

/// How [`downsample`] reduces each `r×r` block.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DownsampleMode {
    /// Keep the top-left sample of each block.
    #[default]
    Decimate,
    /// Average the block.
    BlockMean,
}

pub fn downsample(cube: &HsiCube, r: usize, mode: DownsampleMode) -> Result<HsiCube> {
    let (h, w, bands) = cube.shape();
    for (axis, extent) in [("height", h), ("width", w)] {
        if r == 0 || extent % r != 0 {
            return Err(Error::NotDivisible { op: "downsample", axis, extent, factor: r });
        }
    }
    let (oh, ow) = (h / r, w / r);
    let mut data = Vec::with_capacity(oh * ow * bands);
    for i in 0..oh {
        for j in 0..ow {
            match mode {
                DownsampleMode::Decimate => data.extend_from_slice(cube.pixel(i * r, j * r)),
                DownsampleMode::BlockMean => {
                    let mut acc = vec![0.0; bands];
                    for a in 0..r {
                        for b in 0..r {
                            for (s, v) in acc.iter_mut().zip(cube.pixel(i * r + a, j * r + b)) {
                                *s += v;
                            }
                        }
                    }
                    let n = (r * r) as f64;
                    data.extend(acc.into_iter().map(|s| s / n));
                }
            }
        }
    }
    let out = HsiCube::new(oh, ow, bands, data)?;
    match cube.wavelengths() {
        Some(wl) => out.with_wavelengths(wl.to_vec()),
        None => Ok(out),
    }
}

/// Per-pixel spectral projection `y = Mᵀ·x`.
pub fn apply_srf(cube: &HsiCube, srf: &SpectralResponse) -> Result<HsiCube> {
    let (h, w, bands) = cube.shape();
    if srf.bands_in() != bands {
        return Err(Error::shape("apply_srf", "spectral response rows", bands, srf.bands_in()));
    }
    let out_bands = srf.bands_out();
    let m = srf.matrix();
    let mut data = Vec::with_capacity(h * w * out_bands);
    for px in cube.data().chunks(bands) {
        for o in 0..out_bands {
            data.push(px.iter().enumerate().map(|(b, v)| v * m[b * out_bands + o]).sum());
        }
    }
    HsiCube::new(h, w, out_bands, data)
}

/// Row-major sliding-window patches.
pub fn extract_patches(cube: &HsiCube, size: usize, stride: usize) -> Result<Vec<HsiCube>> {
    let (h, w, _) = cube.shape();
    if size == 0 || size > h || size > w {
        return Err(Error::InvalidArgument(format!("patch size {size} does not fit a {h}x{w} cube")));
    }
    if stride == 0 {
        return Err(Error::InvalidArgument("patch stride must be positive".into()));
    }
    let mut out = Vec::new();
    for i in (0..=h - size).step_by(stride) {
        for j in (0..=w - size).step_by(stride) {
            out.push(cube.crop(i, j, size, size)?);
        }
    }
    Ok(out)
}

/// Degradation settings. The defaults are a 3×3 Gaussian with σ = 0.5,
/// then decimation by 4.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Degradation {
    pub kernel_size: usize,
    pub sigma: f64,
    pub scale: usize,
    pub mode: DownsampleMode,
}

impl Default for Degradation {
    fn default() -> Self {
        Degradation { kernel_size: 3, sigma: 0.5, scale: 4, mode: DownsampleMode::Decimate }
    }
}

/// `(LR-HSI, HR-MSI)` from a ground-truth cube with default blur settings.
pub fn simulate_pair(gt: &HsiCube, srf: &SpectralResponse, r: usize) -> Result<(HsiCube, HsiCube)> {
    simulate_pair_with(gt, srf, &Degradation { scale: r, ..Degradation::default() })
}

pub fn simulate_pair_with(gt: &HsiCube, srf: &SpectralResponse, deg: &Degradation) -> Result<(HsiCube, HsiCube)> {
    let lr = downsample(&gaussian_blur(gt, deg.kernel_size, deg.sigma)?, deg.scale, deg.mode)?;
    let msi = apply_srf(gt, srf)?;
    Ok((lr, msi))
}

/// Seeded shuffle of `0..n` split into `(train, test)` index lists. The
/// train share is `round(n·train_fraction)`, at least one when `n > 0`.
pub fn train_test_split(n: usize, train_fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(0.0..=1.0).contains(&train_fraction) {
        return Err(Error::InvalidArgument(format!("train fraction must lie in [0, 1], got {train_fraction}")));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_train = ((n as f64 * train_fraction).round() as usize).clamp(n.min(1), n);
    let test = idx.split_off(n_train);
    Ok((idx, test))
}

/// A smooth synthetic scene with values in `[0.05, 0.95]`: a few materials
/// with sinusoidal spectra mixed by low-frequency abundance maps. Used for
/// fixtures and demos.
pub fn synthetic_cube(h: usize, w: usize, bands: usize, seed: u64) -> Result<HsiCube> {
    const MATERIALS: usize = 3;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let spectra: Vec<[f64; 3]> = (0..MATERIALS)
        .map(|_| [rng.gen_range(0.5..2.0), rng.gen_range(0.0..std::f64::consts::TAU), rng.gen_range(0.2..0.4)])
        .collect();
    let fields: Vec<[f64; 5]> = (0..MATERIALS)
        .map(|_| {
            [
                rng.gen_range(0.5..2.0),
                rng.gen_range(0.5..2.0),
                rng.gen_range(0.0..std::f64::consts::TAU),
                rng.gen_range(0.0..std::f64::consts::TAU),
                rng.gen_range(0.5..1.0),
            ]
        })
        .collect();
    let mut data = Vec::with_capacity(h * w * bands);
    for i in 0..h {
        for j in 0..w {
            let (y, x) = (i as f64 / h as f64, j as f64 / w as f64);
            let raw: Vec<f64> = fields
                .iter()
                .map(|&[fy, fx, py, px, amp]| {
                    1.0 + amp * (std::f64::consts::PI * fy * y + py).sin() * (std::f64::consts::PI * fx * x + px).cos()
                })
                .collect();
            let total: f64 = raw.iter().sum();
            for b in 0..bands {
                let l = if bands > 1 { b as f64 / (bands - 1) as f64 } else { 0.5 };
                let v: f64 = raw
                    .iter()
                    .zip(&spectra)
                    .map(|(a, &[f, p, amp])| a / total * (0.5 + amp * (std::f64::consts::TAU * f * l + p).sin()))
                    .sum();
                data.push(v.clamp(0.05, 0.95));
            }
        }
    }
    let cube = HsiCube::new(h, w, bands, data)?;
    cube.with_wavelengths(srf::even_wavelengths(bands))
}

#[cfg(test)]
mod tests;
