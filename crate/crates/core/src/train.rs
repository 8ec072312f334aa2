//! Training loop, model evaluation, and the ablation driver.
//!
//! Training is deterministic for a fixed seed: parameters are initialized
//! from `seed`, the per-epoch patch order comes from an independent stream of
//! the same seed, and every reduction runs in a fixed order.

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::fusion::{FusionConfig, WeightMode};
use crate::metrics::{evaluate_with, MetricsReport, PsnrConvention, Summary};
use crate::network::{bicubic_upsample, forward, Architecture, ModelParams, Upsampler};
use crate::simdata::HsiCube;
use crate::tensor::ops::{self, Reduction};
use crate::tensor::optim::{zero_grads, Adam};
use crate::tensor::Tensor;

/// One simulated training triple.
#[derive(Debug, Clone)]
pub struct TrainingPair {
    pub name: String,
    pub lr: HsiCube,
    pub msi: HsiCube,
    pub gt: HsiCube,
}

impl TrainingPair {
    pub fn new(name: impl Into<String>, lr: HsiCube, msi: HsiCube, gt: HsiCube) -> Result<Self> {
        let pair = TrainingPair { name: name.into(), lr, msi, gt };
        pair.scale()?;
        Ok(pair)
    }

    /// The HR/LR ratio, checked to be integral and consistent.
    pub fn scale(&self) -> Result<usize> {
        let (h, w, s) = self.lr.shape();
        let (hh, ww, _) = self.msi.shape();
        let bad = |detail: String| Err(Error::invalid_shape("TrainingPair", detail));
        if self.gt.shape() != (hh, ww, s) {
            return bad(format!("ground truth {:?} must be {hh}x{ww}x{s}", self.gt.shape()));
        }
        if hh % h != 0 || ww % w != 0 || hh / h != ww / w {
            return bad(format!("HR extent {hh}x{ww} is not an integer multiple of LR extent {h}x{w}"));
        }
        Ok(hh / h)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// The loss is L1; this picks mean or sum over elements.
    pub reduction: Reduction,
    /// Fusion widths and ablation switches. `r` must match the data.
    pub fusion: FusionConfig,
    pub upsampler: Upsampler,
    pub spectral_depth: usize,
    pub spatial_depth: usize,
    pub decoder_relu: bool,
    /// Steps between checkpoint hooks; 0 disables them.
    pub checkpoint_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 1e-4,
            epochs: 1,
            batch_size: 1,
            seed: 0,
            reduction: Reduction::Mean,
            fusion: FusionConfig::default(),
            upsampler: Upsampler::Inf3,
            spectral_depth: 2,
            spatial_depth: 2,
            decoder_relu: true,
            checkpoint_every: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::InvalidArgument(format!("learning rate must be positive, got {}", self.lr)));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidArgument("batch size must be positive".into()));
        }
        self.fusion.validate()
    }

    /// The model layout for data with the given band counts.
    pub fn architecture(&self, bands: usize, msi_bands: usize) -> Architecture {
        Architecture {
            spectral_depth: self.spectral_depth,
            spatial_depth: self.spatial_depth,
            decoder_relu: self.decoder_relu,
            upsampler: self.upsampler,
            ..Architecture::new(bands, msi_bands, self.fusion)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossRecord {
    /// 1-based optimizer step.
    pub step: usize,
    pub epoch: usize,
    pub loss: f64,
}

/// `step,loss` CSV.
pub fn loss_csv(history: &[LossRecord]) -> String {
    let mut out = String::from("step,loss\n");
    for r in history {
        let _ = writeln!(out, "{},{}", r.step, r.loss);
    }
    out
}

fn check_pairs(pairs: &[TrainingPair], cfg: &TrainConfig) -> Result<(usize, usize)> {
    let first = pairs.first().ok_or_else(|| Error::InvalidArgument("training needs at least one pair".into()))?;
    let bands = (first.lr.bands(), first.msi.bands());
    let (lr_shape, msi_shape) = (first.lr.shape(), first.msi.shape());
    for p in pairs {
        let r = p.scale()?;
        if r != cfg.fusion.r {
            return Err(Error::invalid_shape("train", format!("pair {} has scale {r}, config says {}", p.name, cfg.fusion.r)));
        }
        if p.lr.shape() != lr_shape || p.msi.shape() != msi_shape {
            return Err(Error::invalid_shape(
                "train",
                format!("pair {} has shapes {:?}/{:?}, expected {lr_shape:?}/{msi_shape:?}", p.name, p.lr.shape(), p.msi.shape()),
            ));
        }
    }
    Ok(bands)
}

pub fn train(pairs: &[TrainingPair], cfg: &TrainConfig) -> Result<(ModelParams, Vec<LossRecord>)> {
    train_with_hook(pairs, cfg, |_, _| Ok(()))
}

/// [`train`], calling `hook(step, params)` every `cfg.checkpoint_every` steps.
pub fn train_with_hook(
    pairs: &[TrainingPair],
    cfg: &TrainConfig,
    mut hook: impl FnMut(usize, &ModelParams) -> Result<()>,
) -> Result<(ModelParams, Vec<LossRecord>)> {
    cfg.validate()?;
    let (bands, msi_bands) = check_pairs(pairs, cfg)?;
    let mut params = ModelParams::init(&cfg.architecture(bands, msi_bands), cfg.seed)?;
    let adam = Adam::with_lr(cfg.lr);
    let tensors: Vec<[Tensor; 3]> = pairs.iter().map(|p| [p.lr.to_tensor(), p.msi.to_tensor(), p.gt.to_tensor()]).collect();

    let mut order_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    order_rng.set_stream(1);
    let mut order: Vec<usize> = (0..pairs.len()).collect();
    let mut history = Vec::new();
    let mut step = 0;
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut order_rng);
        for batch in order.chunks(cfg.batch_size) {
            zero_grads(params.params());
            let mut total: Option<Tensor> = None;
            for &k in batch {
                let [x, y, gt] = &tensors[k];
                let loss = ops::l1_loss(&forward(x, y, &params)?, gt, cfg.reduction)?;
                total = Some(match total {
                    None => loss,
                    Some(t) => ops::add(&t, &loss)?,
                });
            }
            let loss = ops::scale(&total.expect("chunks are non-empty"), 1.0 / batch.len() as f64);
            loss.backward()?;
            adam.step(params.params_mut())?;
            step += 1;
            history.push(LossRecord { step, epoch, loss: loss.item() });
            if cfg.checkpoint_every > 0 && step % cfg.checkpoint_every == 0 {
                hook(step, &params)?;
            }
        }
    }
    Ok((params, history))
}

/// The model's fused cube for one pair.
pub fn predict(params: &ModelParams, pair: &TrainingPair) -> Result<HsiCube> {
    let out = forward(&pair.lr.to_tensor(), &pair.msi.to_tensor(), params)?;
    let cube = HsiCube::from_tensor(&out)?;
    match pair.gt.wavelengths() {
        Some(wl) => cube.with_wavelengths(wl.to_vec()),
        None => Ok(cube),
    }
}

/// Plain bicubic upsampling of the LR-HSI.
pub fn bicubic_baseline(pair: &TrainingPair) -> Result<HsiCube> {
    HsiCube::from_tensor(&bicubic_upsample(&pair.lr.to_tensor(), pair.scale()?)?)
}

/// Metrics of the model on every pair.
pub fn evaluate_model(params: &ModelParams, pairs: &[TrainingPair]) -> Result<MetricsReport> {
    evaluate_model_with(params, pairs, PsnrConvention::Joint)
}

pub fn evaluate_model_with(params: &ModelParams, pairs: &[TrainingPair], convention: PsnrConvention) -> Result<MetricsReport> {
    let rows = pairs
        .iter()
        .map(|p| evaluate_with(p.name.clone(), &predict(params, p)?, &p.gt, p.scale()?, convention))
        .collect::<Result<_>>()?;
    Ok(MetricsReport::new(rows, Some(params.param_count())))
}

/// Metrics of plain bicubic upsampling on every pair.
pub fn evaluate_bicubic(pairs: &[TrainingPair], convention: PsnrConvention) -> Result<MetricsReport> {
    let rows = pairs
        .iter()
        .map(|p| evaluate_with(p.name.clone(), &bicubic_baseline(p)?, &p.gt, p.scale()?, convention))
        .collect::<Result<_>>()?;
    Ok(MetricsReport::new(rows, None))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AblationAxis {
    DualFreq,
    RelCoord,
    WeightMode,
    Upsampler,
}

impl AblationAxis {
    pub const ALL: [AblationAxis; 4] =
        [AblationAxis::DualFreq, AblationAxis::RelCoord, AblationAxis::WeightMode, AblationAxis::Upsampler];

    pub fn name(self) -> &'static str {
        match self {
            AblationAxis::DualFreq => "dual_freq",
            AblationAxis::RelCoord => "rel_coord",
            AblationAxis::WeightMode => "weight_mode",
            AblationAxis::Upsampler => "upsampler",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|a| a.name() == s)
    }

    /// `(label, config)` for each arm, in table order.
    pub fn arms(self, base: &TrainConfig) -> Vec<(String, TrainConfig)> {
        let with = |f: &dyn Fn(&mut TrainConfig)| {
            let mut c = base.clone();
            f(&mut c);
            c
        };
        let arm = |label: &str, c: TrainConfig| (label.to_string(), c);
        match self {
            AblationAxis::DualFreq => vec![
                arm("LR-only", with(&|c| (c.fusion.use_lr_injection, c.fusion.use_hr_injection) = (true, false))),
                arm("HR-only", with(&|c| (c.fusion.use_lr_injection, c.fusion.use_hr_injection) = (false, true))),
                arm("LR+HR", with(&|c| (c.fusion.use_lr_injection, c.fusion.use_hr_injection) = (true, true))),
            ],
            AblationAxis::RelCoord => vec![
                arm("without rel", with(&|c| c.fusion.use_rel_coord = false)),
                arm("with rel", with(&|c| c.fusion.use_rel_coord = true)),
            ],
            AblationAxis::WeightMode => vec![
                arm("area", with(&|c| c.fusion.weight_mode = WeightMode::Area)),
                arm("cosine", with(&|c| c.fusion.weight_mode = WeightMode::Cosine)),
            ],
            AblationAxis::Upsampler => Upsampler::ALL.into_iter().map(|u| arm(u.name(), with(&|c| c.upsampler = u))).collect(),
        }
    }

    fn footer(self) -> Option<&'static str> {
        match self {
            AblationAxis::WeightMode => Some("network-generated weights are not implemented; that row is omitted"),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AblationRow {
    pub label: String,
    /// `[PSNR, SAM, ERGAS, SSIM]`.
    pub metrics: [Summary; 4],
    pub params: usize,
    pub final_loss: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AblationTable {
    pub axis: AblationAxis,
    pub rows: Vec<AblationRow>,
    pub footer: Option<String>,
}

impl AblationTable {
    pub const COLUMNS: [&'static str; 6] = ["arm", "PSNR", "SAM", "ERGAS", "SSIM", "params"];

    pub fn to_csv(&self) -> String {
        let mut out = format!("{}\n", Self::COLUMNS.join(","));
        for r in &self.rows {
            let m = &r.metrics;
            let _ = writeln!(out, "{},{},{},{},{},{}", r.label, m[0].mean, m[1].mean, m[2].mean, m[3].mean, r.params);
        }
        out
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("ablation: {}\n", self.axis.name());
        let _ = writeln!(out, "{:<14}{:>16}{:>14}{:>14}{:>18}{:>10}", "arm", "PSNR", "SAM", "ERGAS", "SSIM", "params");
        for r in &self.rows {
            let m = &r.metrics;
            let _ = writeln!(
                out,
                "{:<14}{:>16}{:>14}{:>14}{:>18}{:>10}",
                r.label,
                format!("{:.2}±{:.2}", m[0].mean, m[0].std),
                format!("{:.3}±{:.3}", m[1].mean, m[1].std),
                format!("{:.3}±{:.3}", m[2].mean, m[2].std),
                format!("{:.4}±{:.4}", m[3].mean, m[3].std),
                r.params
            );
        }
        if let Some(f) = &self.footer {
            let _ = writeln!(out, "note: {f}");
        }
        out
    }
}

/// Trains one model per arm of `axis` on `train_pairs` and scores it on
/// `test_pairs` (or on the training pairs when there are no test pairs).
pub fn run_ablation(
    axis: AblationAxis,
    base: &TrainConfig,
    train_pairs: &[TrainingPair],
    test_pairs: &[TrainingPair],
) -> Result<AblationTable> {
    let eval_pairs = if test_pairs.is_empty() { train_pairs } else { test_pairs };
    let mut rows = Vec::new();
    for (label, cfg) in axis.arms(base) {
        let (params, history) = train(train_pairs, &cfg)?;
        let report = evaluate_model(&params, eval_pairs)?;
        rows.push(AblationRow {
            label,
            metrics: report.summary(),
            params: params.param_count(),
            final_loss: history.last().map_or(f64::NAN, |r| r.loss),
        });
    }
    let mut footer = axis.footer().map(String::from);
    if test_pairs.is_empty() {
        let note = "no held-out pairs; metrics are on the training pairs";
        footer = Some(match footer {
            Some(f) => format!("{f}; {note}"),
            None => note.into(),
        });
    }
    Ok(AblationTable { axis, rows, footer })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simdata::{simulate_pair, synthetic_cube, SpectralResponse};

    fn fixture(n: usize, size: usize, bands: usize, r: usize) -> Vec<TrainingPair> {
        let srf = SpectralResponse::synthetic_rgb_even(bands).unwrap();
        (0..n)
            .map(|k| {
                let gt = synthetic_cube(size, size, bands, k as u64).unwrap();
                let (lr, msi) = simulate_pair(&gt, &srf, r).unwrap();
                TrainingPair::new(format!("p{k}"), lr, msi, gt).unwrap()
            })
            .collect()
    }

    fn tiny_cfg() -> TrainConfig {
        TrainConfig {
            lr: 1e-3,
            fusion: FusionConfig { d1: 4, d2: 4, c: 4, r: 2, ..FusionConfig::default() },
            ..TrainConfig::default()
        }
    }

    #[test]
    fn zero_epochs_returns_the_initialization() {
        let pairs = fixture(1, 8, 3, 2);
        let cfg = TrainConfig { epochs: 0, ..tiny_cfg() };
        let (p, h) = train(&pairs, &cfg).unwrap();
        assert!(h.is_empty());
        let init = ModelParams::init(&cfg.architecture(3, 3), cfg.seed).unwrap();
        assert_eq!(p.to_bytes(), init.to_bytes());
    }

    #[test]
    fn identical_seeds_give_identical_runs() {
        let pairs = fixture(3, 8, 3, 2);
        let cfg = TrainConfig { epochs: 3, seed: 5, ..tiny_cfg() };
        let (a, ha) = train(&pairs, &cfg).unwrap();
        let (b, hb) = train(&pairs, &cfg).unwrap();
        assert_eq!(loss_csv(&ha), loss_csv(&hb));
        assert_eq!(a.to_bytes(), b.to_bytes());
        assert_eq!(ha.len(), 9);
        let (c, _) = train(&pairs, &TrainConfig { seed: 6, ..cfg }).unwrap();
        assert_ne!(a.to_bytes(), c.to_bytes());
    }

    #[test]
    fn single_pair_loss_drops_below_a_fifth() {
        let pairs = fixture(1, 16, 4, 2);
        let cfg = TrainConfig { epochs: 200, seed: 1, ..tiny_cfg() };
        let (_, h) = train(&pairs, &cfg).unwrap();
        let (first, last) = (h[0].loss, h.last().unwrap().loss);
        assert!(last < 0.2 * first, "{first} -> {last}");
    }

    #[test]
    fn batches_and_hooks() {
        let pairs = fixture(3, 8, 3, 2);
        let cfg = TrainConfig { epochs: 2, batch_size: 2, checkpoint_every: 3, ..tiny_cfg() };
        let mut seen = Vec::new();
        let (_, h) = train_with_hook(&pairs, &cfg, |s, _| {
            seen.push(s);
            Ok(())
        })
        .unwrap();
        // ⌈3/2⌉ = 2 steps per epoch
        assert_eq!(h.iter().map(|r| (r.step, r.epoch)).collect::<Vec<_>>(), vec![(1, 0), (2, 0), (3, 1), (4, 1)]);
        assert_eq!(seen, vec![3]);
    }

    #[test]
    fn inconsistent_data_is_rejected() {
        let mut pairs = fixture(2, 8, 3, 2);
        assert!(train(&pairs, &TrainConfig { fusion: FusionConfig { r: 4, ..tiny_cfg().fusion }, ..tiny_cfg() }).is_err());
        pairs.push(fixture(1, 16, 3, 2).remove(0));
        assert!(train(&pairs, &tiny_cfg()).is_err());
        assert!(train(&[], &tiny_cfg()).is_err());
        assert!(train(&pairs[..1], &TrainConfig { lr: 0.0, ..tiny_cfg() }).is_err());
    }

    #[test]
    fn ablation_row_counts_and_order() {
        let base = tiny_cfg();
        let labels = |a: AblationAxis| a.arms(&base).into_iter().map(|(l, _)| l).collect::<Vec<_>>();
        assert_eq!(labels(AblationAxis::DualFreq), ["LR-only", "HR-only", "LR+HR"]);
        assert_eq!(labels(AblationAxis::RelCoord).len(), 2);
        assert_eq!(labels(AblationAxis::WeightMode), ["area", "cosine"]);
        assert_eq!(labels(AblationAxis::Upsampler), ["bilinear", "bicubic", "pixel_shuffle", "inf3"]);

        let pairs = fixture(1, 8, 3, 2);
        let table = run_ablation(AblationAxis::WeightMode, &TrainConfig { epochs: 2, ..base }, &pairs, &[]).unwrap();
        assert_eq!(table.rows.len(), 2);
        let csv = table.to_csv();
        assert!(csv.starts_with("arm,PSNR,SAM,ERGAS,SSIM,params\n"));
        assert_eq!(csv.lines().count(), 3);
        assert!(table.to_text().contains("network-generated"));
    }

    #[test]
    fn bicubic_baseline_scores() {
        let pairs = fixture(2, 16, 4, 2);
        let report = evaluate_bicubic(&pairs, PsnrConvention::Joint).unwrap();
        assert_eq!(report.rows.len(), 2);
        assert!(report.rows.iter().all(|r| r.psnr.db > 20.0 && r.ssim > 0.5));
    }
}
