//! Quality indices for fused cubes and report formatting.
//!
//! All indices assume a unit dynamic range (peak value 1).
//!
//! - PSNR: `10·log10(1/MSE)`. By default the MSE is taken jointly over all
//!   bands; [`PsnrConvention::PerBand`] averages per-band PSNRs instead.
//! - SAM: mean spectral angle in degrees, i.e. the mean of
//!   `arccos(p·g / (‖p‖‖g‖))`; pixels where either spectrum has zero norm
//!   are skipped and counted.
//! - ERGAS: `(100/r)·sqrt(mean_b (RMSE_b / mean_b(gt))²)`; bands whose
//!   ground-truth mean is zero are skipped and counted.
//! - SSIM: 11×11 Gaussian window with σ = 1.5, `C1 = 0.01²`, `C2 = 0.03²`.
//!   The window is truncated at the borders and renormalized over the
//!   samples it still covers, so the map has the image's extent. The map is
//!   averaged per band, then over bands.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::simdata::HsiCube;

fn same_shape(op: &'static str, a: &HsiCube, b: &HsiCube) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::invalid_shape(op, format!("prediction is {:?} but ground truth is {:?}", a.shape(), b.shape())));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PsnrConvention {
    /// One MSE over every sample.
    #[default]
    Joint,
    /// Mean of per-band PSNRs.
    PerBand,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Psnr {
    /// Decibels; `f64::INFINITY` when the error is exactly zero.
    pub db: f64,
    /// Set when `db` is infinite because some MSE was exactly zero.
    pub infinite: bool,
}

fn psnr_from_mse(mse: f64) -> f64 {
    if mse == 0.0 {
        f64::INFINITY
    } else {
        -10.0 * mse.log10()
    }
}

pub fn psnr(pred: &HsiCube, gt: &HsiCube) -> Result<Psnr> {
    psnr_with(pred, gt, PsnrConvention::Joint)
}

pub fn psnr_with(pred: &HsiCube, gt: &HsiCube, convention: PsnrConvention) -> Result<Psnr> {
    same_shape("psnr", pred, gt)?;
    let db = match convention {
        PsnrConvention::Joint => {
            let n = pred.data().len() as f64;
            psnr_from_mse(pred.data().iter().zip(gt.data()).map(|(p, g)| (p - g).powi(2)).sum::<f64>() / n)
        }
        PsnrConvention::PerBand => {
            let bands = band_sq_errors(pred, gt);
            let n = (pred.height() * pred.width()) as f64;
            bands.iter().map(|&s| psnr_from_mse(s / n)).sum::<f64>() / bands.len() as f64
        }
    };
    Ok(Psnr { db, infinite: db.is_infinite() })
}

fn band_sq_errors(pred: &HsiCube, gt: &HsiCube) -> Vec<f64> {
    let b = pred.bands();
    let mut acc = vec![0.0; b];
    for (k, (p, g)) in pred.data().iter().zip(gt.data()).enumerate() {
        acc[k % b] += (p - g).powi(2);
    }
    acc
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sam {
    pub degrees: f64,
    /// Pixels left out because a spectrum had zero norm.
    pub skipped: usize,
}

/// Angle between two non-zero vectors as `2·atan2(‖â − b̂‖, ‖â + b̂‖)`.
/// This equals `arccos(clamp(â·b̂, −1, 1))` but stays accurate near 0 and
/// 180 degrees, where the cosine form loses half its digits.
fn unit_angle(a: &[f64], na: f64, b: &[f64], nb: f64) -> f64 {
    let (mut diff, mut sum) = (0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (u, v) = (x / na, y / nb);
        diff += (u - v) * (u - v);
        sum += (u + v) * (u + v);
    }
    2.0 * diff.sqrt().atan2(sum.sqrt())
}

pub fn sam(pred: &HsiCube, gt: &HsiCube) -> Result<Sam> {
    same_shape("sam", pred, gt)?;
    let b = pred.bands();
    let (mut total, mut counted, mut skipped) = (0.0, 0usize, 0usize);
    for (p, g) in pred.data().chunks(b).zip(gt.data().chunks(b)) {
        let np = p.iter().map(|v| v * v).sum::<f64>().sqrt();
        let ng = g.iter().map(|v| v * v).sum::<f64>().sqrt();
        if np == 0.0 || ng == 0.0 {
            skipped += 1;
            continue;
        }
        total += unit_angle(p, np, g, ng);
        counted += 1;
    }
    let degrees = if counted == 0 { 0.0 } else { (total / counted as f64).to_degrees() };
    Ok(Sam { degrees, skipped })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ergas {
    pub value: f64,
    /// Bands left out because their ground-truth mean was zero.
    pub skipped_bands: usize,
}

pub fn ergas(pred: &HsiCube, gt: &HsiCube, r: usize) -> Result<Ergas> {
    same_shape("ergas", pred, gt)?;
    if r == 0 {
        return Err(Error::InvalidArgument("ergas scale ratio must be positive".into()));
    }
    let n = (pred.height() * pred.width()) as f64;
    let sq = band_sq_errors(pred, gt);
    let b = gt.bands();
    let mut mean = vec![0.0; b];
    for (k, g) in gt.data().iter().enumerate() {
        mean[k % b] += g;
    }
    let (mut acc, mut used) = (0.0, 0usize);
    for (s, m) in sq.iter().zip(&mean) {
        let m = m / n;
        if m == 0.0 {
            continue;
        }
        acc += (s / n) / (m * m);
        used += 1;
    }
    let value = if used == 0 { 0.0 } else { 100.0 / r as f64 * (acc / used as f64).sqrt() };
    Ok(Ergas { value, skipped_bands: b - used })
}

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_C1: f64 = 1e-4;
pub const SSIM_C2: f64 = 9e-4;

fn gaussian_1d() -> Vec<f64> {
    let half = (SSIM_WINDOW / 2) as f64;
    let raw: Vec<f64> = (0..SSIM_WINDOW).map(|i| (-(i as f64 - half).powi(2) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp()).collect();
    let s: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / s).collect()
}

/// Windowed mean along one axis of a `rows × cols` plane, renormalized over
/// the taps that stay inside.
fn filter_axis(plane: &[f64], rows: usize, cols: usize, along_rows: bool, g: &[f64]) -> Vec<f64> {
    let half = (g.len() / 2) as isize;
    let (n, stride_len) = if along_rows { (rows, cols) } else { (cols, rows) };
    let mut out = vec![0.0; plane.len()];
    for line in 0..stride_len {
        for i in 0..n {
            let (mut acc, mut wsum) = (0.0, 0.0);
            for (t, &w) in g.iter().enumerate() {
                let k = i as isize + t as isize - half;
                if k < 0 || k >= n as isize {
                    continue;
                }
                let idx = if along_rows { k as usize * cols + line } else { line * cols + k as usize };
                acc += w * plane[idx];
                wsum += w;
            }
            let idx = if along_rows { i * cols + line } else { line * cols + i };
            out[idx] = acc / wsum;
        }
    }
    out
}

fn window_mean(plane: &[f64], h: usize, w: usize, g: &[f64]) -> Vec<f64> {
    filter_axis(&filter_axis(plane, h, w, true, g), h, w, false, g)
}

/// Mean SSIM of one band pair.
pub fn ssim_plane(x: &[f64], y: &[f64], h: usize, w: usize) -> f64 {
    let g = gaussian_1d();
    let xx: Vec<f64> = x.iter().map(|v| v * v).collect();
    let yy: Vec<f64> = y.iter().map(|v| v * v).collect();
    let xy: Vec<f64> = x.iter().zip(y).map(|(a, b)| a * b).collect();
    let (mx, my) = (window_mean(x, h, w, &g), window_mean(y, h, w, &g));
    let (mxx, myy, mxy) = (window_mean(&xx, h, w, &g), window_mean(&yy, h, w, &g), window_mean(&xy, h, w, &g));
    let mut total = 0.0;
    for k in 0..h * w {
        let (a, b) = (mx[k], my[k]);
        let (vx, vy, cxy) = (mxx[k] - a * a, myy[k] - b * b, mxy[k] - a * b);
        total += ((2.0 * a * b + SSIM_C1) * (2.0 * cxy + SSIM_C2)) / ((a * a + b * b + SSIM_C1) * (vx + vy + SSIM_C2));
    }
    total / (h * w) as f64
}

pub fn ssim(pred: &HsiCube, gt: &HsiCube) -> Result<f64> {
    same_shape("ssim", pred, gt)?;
    let (h, w, b) = pred.shape();
    Ok((0..b).map(|k| ssim_plane(&pred.band(k), &gt.band(k), h, w)).sum::<f64>() / b as f64)
}

/// CSV of the spectra at `(row, col)`: a `band` column, then one column per
/// named cube.
pub fn spectral_profile(cubes: &[(&str, &HsiCube)], row: usize, col: usize) -> Result<String> {
    let first = cubes.first().ok_or_else(|| Error::InvalidArgument("spectral profile needs at least one cube".into()))?.1;
    for (name, c) in cubes {
        if row >= c.height() || col >= c.width() {
            return Err(Error::InvalidArgument(format!(
                "position ({row}, {col}) is outside {name} ({}x{})",
                c.height(),
                c.width()
            )));
        }
        if c.bands() != first.bands() {
            return Err(Error::shape("spectral_profile", "bands", first.bands(), c.bands()));
        }
    }
    let mut out = String::from("band");
    for (name, _) in cubes {
        let _ = write!(out, ",{name}");
    }
    out.push('\n');
    for b in 0..first.bands() {
        let _ = write!(out, "{b}");
        for (_, c) in cubes {
            let _ = write!(out, ",{}", c.get(row, col, b));
        }
        out.push('\n');
    }
    Ok(out)
}

/// The four indices for one image.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageMetrics {
    pub image: String,
    pub psnr: Psnr,
    pub sam: Sam,
    pub ergas: Ergas,
    pub ssim: f64,
}

pub fn evaluate(image: impl Into<String>, pred: &HsiCube, gt: &HsiCube, r: usize) -> Result<ImageMetrics> {
    evaluate_with(image, pred, gt, r, PsnrConvention::Joint)
}

pub fn evaluate_with(
    image: impl Into<String>,
    pred: &HsiCube,
    gt: &HsiCube,
    r: usize,
    convention: PsnrConvention,
) -> Result<ImageMetrics> {
    Ok(ImageMetrics {
        image: image.into(),
        psnr: psnr_with(pred, gt, convention)?,
        sam: sam(pred, gt)?,
        ergas: ergas(pred, gt, r)?,
        ssim: ssim(pred, gt)?,
    })
}

/// Mean and population standard deviation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Summary {
    pub mean: f64,
    pub std: f64,
}

fn summarize(values: impl Iterator<Item = f64>) -> Summary {
    let v: Vec<f64> = values.collect();
    if v.is_empty() {
        return Summary { mean: f64::NAN, std: f64::NAN };
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if mean.is_infinite() {
        return Summary { mean, std: f64::NAN };
    }
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    Summary { mean, std: var.sqrt() }
}

pub const REPORT_COLUMNS: [&str; 5] = ["image", "PSNR", "SAM", "ERGAS", "SSIM"];

#[derive(Debug, Clone, Default, PartialEq)]
pub struct MetricsReport {
    pub rows: Vec<ImageMetrics>,
    pub param_count: Option<usize>,
}

impl MetricsReport {
    pub fn new(rows: Vec<ImageMetrics>, param_count: Option<usize>) -> Self {
        MetricsReport { rows, param_count }
    }

    /// `[PSNR, SAM, ERGAS, SSIM]` summaries over the rows.
    pub fn summary(&self) -> [Summary; 4] {
        [
            summarize(self.rows.iter().map(|r| r.psnr.db)),
            summarize(self.rows.iter().map(|r| r.sam.degrees)),
            summarize(self.rows.iter().map(|r| r.ergas.value)),
            summarize(self.rows.iter().map(|r| r.ssim)),
        ]
    }

    fn values(r: &ImageMetrics) -> [f64; 4] {
        [r.psnr.db, r.sam.degrees, r.ergas.value, r.ssim]
    }

    /// One row per image, then `mean` and `std` rows.
    pub fn to_csv(&self) -> String {
        let mut out = REPORT_COLUMNS.join(",");
        out.push('\n');
        for r in &self.rows {
            let v = Self::values(r);
            let _ = writeln!(out, "{},{},{},{},{}", r.image, v[0], v[1], v[2], v[3]);
        }
        let s = self.summary();
        let _ = writeln!(out, "mean,{},{},{},{}", s[0].mean, s[1].mean, s[2].mean, s[3].mean);
        let _ = writeln!(out, "std,{},{},{},{}", s[0].std, s[1].std, s[2].std, s[3].std);
        out
    }

    /// Aligned table with a `mean ± std` footer and the parameter count.
    pub fn to_text(&self) -> String {
        let mut lines: Vec<[String; 5]> = vec![REPORT_COLUMNS.map(String::from)];
        for r in &self.rows {
            let v = Self::values(r);
            lines.push([r.image.clone(), fmt_num(v[0], 2), fmt_num(v[1], 3), fmt_num(v[2], 3), fmt_num(v[3], 4)]);
        }
        let s = self.summary();
        let pm = |x: Summary, d: usize| format!("{}±{}", fmt_num(x.mean, d), fmt_num(x.std, d));
        lines.push(["mean±std".into(), pm(s[0], 2), pm(s[1], 3), pm(s[2], 3), pm(s[3], 4)]);
        let widths: Vec<usize> = (0..5).map(|c| lines.iter().map(|l| l[c].chars().count()).max().unwrap_or(0)).collect();
        let mut out = String::new();
        for l in &lines {
            let cells: Vec<String> = l
                .iter()
                .zip(&widths)
                .enumerate()
                .map(|(c, (s, &w))| if c == 0 { format!("{s:<w$}") } else { format!("{s:>w$}") })
                .collect();
            out.push_str(cells.join("  ").trim_end());
            out.push('\n');
        }
        if let Some(n) = self.param_count {
            let _ = writeln!(out, "params: {n}");
        }
        out
    }
}

fn fmt_num(v: f64, digits: usize) -> String {
    if v.is_infinite() {
        "inf".into()
    } else {
        format!("{v:.digits$}")
    }
}
