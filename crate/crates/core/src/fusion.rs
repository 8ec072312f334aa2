//! Dual high-frequency feature assembly and the fused feature map.
//!
//! For an HR query `q` and each of its four LR neighbours `i`:
//!
//! ```text
//! f1 = [S_pe(C_i), S_pa_down(C_i)]        spectral + LR-domain spatial
//! f2 = [f1, S_pa(C_q)]                    + HR-domain spatial at the query
//! f3 = [f2, C_q − C_i]                    + relative coordinate
//! F  = mlp(f3)
//! E_q = Σ_i w_i · F_i
//! ```
//!
//! `S_pa_down` is the `r×r` block mean of the HR spatial features. The
//! weights come either from geometry ([`WeightMode::Area`]) or from a softmax
//! over `f1` similarities against the nearest neighbour
//! ([`WeightMode::Cosine`]). Each of the three injections can be switched off
//! for ablations; the MLP width follows the switches.
//!
//! Feature maps are `[H, W, D]` tensors (channels last).

use crate::error::{Error, Result};
use crate::grid::NeighborQuery;
use crate::kernels::{area_weights, LogitMode};
use crate::layers::Mlp;
use crate::tensor::{ops, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum WeightMode {
    Area,
    #[default]
    Cosine,
}

impl WeightMode {
    pub fn name(self) -> &'static str {
        match self {
            WeightMode::Area => "area",
            WeightMode::Cosine => "cosine",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "area" => Some(WeightMode::Area),
            "cosine" => Some(WeightMode::Cosine),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FusionConfig {
    /// Spectral feature width.
    pub d1: usize,
    /// Spatial feature width.
    pub d2: usize,
    /// Fused feature width.
    pub c: usize,
    /// HR / LR scale factor.
    pub r: usize,
    pub use_lr_injection: bool,
    pub use_hr_injection: bool,
    pub use_rel_coord: bool,
    pub weight_mode: WeightMode,
    pub logit_mode: LogitMode,
    /// Hidden width of a two-layer fusion MLP; `None` is a single affine map.
    pub mlp_hidden: Option<usize>,
}

impl Default for FusionConfig {
    fn default() -> Self {
        FusionConfig {
            d1: 64,
            d2: 64,
            c: 64,
            r: 4,
            use_lr_injection: true,
            use_hr_injection: true,
            use_rel_coord: true,
            weight_mode: WeightMode::Cosine,
            logit_mode: LogitMode::Dot,
            mlp_hidden: None,
        }
    }
}

impl FusionConfig {
    pub fn validate(&self) -> Result<()> {
        if self.d1 == 0 || self.d2 == 0 || self.c == 0 || self.r == 0 {
            return Err(Error::InvalidArgument(format!(
                "fusion widths and scale must be positive (d1={}, d2={}, c={}, r={})",
                self.d1, self.d2, self.c, self.r
            )));
        }
        if self.mlp_hidden == Some(0) {
            return Err(Error::InvalidArgument("fusion mlp hidden width must be positive".into()));
        }
        Ok(())
    }

    /// Width of `f1` under the current switches.
    pub fn f1_width(&self) -> usize {
        self.d1 + if self.use_lr_injection { self.d2 } else { 0 }
    }

    /// Width of `f3`, i.e. the fusion MLP input.
    pub fn mlp_input_width(&self) -> usize {
        self.f1_width() + if self.use_hr_injection { self.d2 } else { 0 } + if self.use_rel_coord { 2 } else { 0 }
    }

    /// Layer widths of the fusion MLP.
    pub fn mlp_widths(&self) -> Vec<usize> {
        match self.mlp_hidden {
            None => vec![self.mlp_input_width(), self.c],
            Some(h) => vec![self.mlp_input_width(), h, self.c],
        }
    }
}

fn expect_hwc(op: &'static str, t: &Tensor, channels: usize) -> Result<(usize, usize)> {
    if t.ndim() != 3 {
        return Err(Error::invalid_shape(op, format!("expected an [H, W, C] map, got {:?}", t.shape())));
    }
    if t.shape()[2] != channels {
        return Err(Error::shape(op, "channels", channels, t.shape()[2]));
    }
    Ok((t.shape()[0], t.shape()[1]))
}

/// `r×r` block mean of an `[H, W, D]` map.
pub fn downsample_spatial(s_pa: &Tensor, r: usize) -> Result<Tensor> {
    if s_pa.ndim() != 3 {
        return Err(Error::invalid_shape("downsample_spatial", format!("expected [H, W, D], got {:?}", s_pa.shape())));
    }
    if r == 1 {
        return Ok(s_pa.clone());
    }
    let chw = ops::permute(s_pa, &[2, 0, 1])?;
    let pooled = ops::mean_pool(&chw, r)?;
    ops::permute(&pooled, &[1, 2, 0])
}

/// `f1`: spectral code, followed by the LR-domain spatial code when enabled.
pub fn build_f1(spectral: &Tensor, spatial_lr: &Tensor, cfg: &FusionConfig) -> Result<Tensor> {
    check_last("build_f1", spectral, cfg.d1)?;
    if !cfg.use_lr_injection {
        return Ok(spectral.clone());
    }
    check_last("build_f1", spatial_lr, cfg.d2)?;
    ops::concat_last(&[spectral.clone(), spatial_lr.clone()])
}

/// `f2`: `f1` followed by the HR-domain spatial code at the query when enabled.
pub fn build_f2(f1: &Tensor, spatial_hr: &Tensor, cfg: &FusionConfig) -> Result<Tensor> {
    check_last("build_f2", f1, cfg.f1_width())?;
    if !cfg.use_hr_injection {
        return Ok(f1.clone());
    }
    check_last("build_f2", spatial_hr, cfg.d2)?;
    ops::concat_last(&[f1.clone(), spatial_hr.clone()])
}

/// `f3`: `f2` followed by the relative coordinate `C_q − C_i` when enabled.
pub fn build_f3(f2: &Tensor, rel: &Tensor, cfg: &FusionConfig) -> Result<Tensor> {
    if !cfg.use_rel_coord {
        return Ok(f2.clone());
    }
    check_last("build_f3", rel, 2)?;
    ops::concat_last(&[f2.clone(), rel.clone()])
}

fn check_last(op: &'static str, t: &Tensor, width: usize) -> Result<()> {
    let got = t.shape().last().copied().unwrap_or(0);
    if got != width {
        return Err(Error::shape(op, "feature width", width, got));
    }
    Ok(())
}

/// Index tables shared by every evaluation over one (HR, LR) raster pair.
struct QueryTable {
    /// `4·M` flat LR indices, neighbour-major within each query.
    neighbor: Vec<usize>,
    nearest: Vec<usize>,
    /// HR pixel index of each of the `4·M` rows.
    query_of_row: Vec<usize>,
    rel: Vec<f64>,
    area: Vec<f64>,
}

impl QueryTable {
    fn new(queries: &[NeighborQuery], h: usize, w: usize) -> Self {
        let m = queries.len();
        let mut t = QueryTable {
            neighbor: Vec::with_capacity(4 * m),
            nearest: Vec::with_capacity(m),
            query_of_row: Vec::with_capacity(4 * m),
            rel: Vec::with_capacity(8 * m),
            area: Vec::with_capacity(4 * m),
        };
        for (k, q) in queries.iter().enumerate() {
            for (slot, &(r, c)) in q.neighbors.iter().enumerate() {
                t.neighbor.push(r * w + c);
                t.query_of_row.push(k);
                t.rel.extend_from_slice(&q.rel[slot]);
            }
            t.nearest.push(q.nearest.0 * w + q.nearest.1);
            t.area.extend_from_slice(&area_weights(q, h, w).w);
        }
        t
    }
}

/// Evaluates the fused feature map `E: [H, W, C]`.
///
/// `s_pe: [h, w, D1]` lives on the LR raster, `s_pa: [H, W, D2]` on the HR
/// raster with `H = r·h`, `W = r·w`; `queries` are the row-major neighbour
/// queries of the HR grid against the LR grid.
pub fn fuse_map(s_pe: &Tensor, s_pa: &Tensor, queries: &[NeighborQuery], cfg: &FusionConfig, mlp: &Mlp) -> Result<Tensor> {
    cfg.validate()?;
    let (h, w) = expect_hwc("fuse_map", s_pe, cfg.d1)?;
    let (hh, ww) = expect_hwc("fuse_map", s_pa, cfg.d2)?;
    if hh != cfg.r * h {
        return Err(Error::shape("fuse_map", "HR height (r·h)", cfg.r * h, hh));
    }
    if ww != cfg.r * w {
        return Err(Error::shape("fuse_map", "HR width (r·w)", cfg.r * w, ww));
    }
    let m = hh * ww;
    if queries.len() != m {
        return Err(Error::shape("fuse_map", "query count", m, queries.len()));
    }
    if mlp.d_in() != cfg.mlp_input_width() {
        return Err(Error::shape("fuse_map", "fusion mlp input width", cfg.mlp_input_width(), mlp.d_in()));
    }
    if mlp.d_out() != cfg.c {
        return Err(Error::shape("fuse_map", "fusion mlp output width", cfg.c, mlp.d_out()));
    }

    let table = QueryTable::new(queries, h, w);
    let spe_rows = ops::reshape(s_pe, &[h * w, cfg.d1])?;
    let spa_rows = ops::reshape(s_pa, &[m, cfg.d2])?;
    let spa_lr = if cfg.use_lr_injection {
        ops::reshape(&downsample_spatial(s_pa, cfg.r)?, &[h * w, cfg.d2])?
    } else {
        Tensor::zeros(&[h * w, cfg.d2])
    };
    let f1_lr = build_f1(&spe_rows, &spa_lr, cfg)?;
    let f1_width = cfg.f1_width();

    let weights = match cfg.weight_mode {
        WeightMode::Area => Tensor::new(&[m, 4], table.area.clone())?,
        WeightMode::Cosine => {
            let f1_n = ops::gather_rows(&f1_lr, &table.neighbor)?;
            let anchor = ops::gather_rows(&f1_lr, &table.nearest)?;
            let logits = ops::neighbor_logits(&ops::reshape(&f1_n, &[m, 4, f1_width])?, &anchor, cfg.logit_mode)?;
            ops::softmax_lastdim(&logits)
        }
    };

    let rel = Tensor::new(&[4 * m, 2], table.rel.clone())?;
    let values = if mlp.layers.len() == 1 {
        factored_affine(&f1_lr, &spa_rows, &rel, &table, cfg, mlp)?
    } else {
        let f1 = ops::gather_rows(&f1_lr, &table.neighbor)?;
        let spa_q = ops::gather_rows(&spa_rows, &table.query_of_row)?;
        let f2 = build_f2(&f1, &spa_q, cfg)?;
        let f3 = build_f3(&f2, &rel, cfg)?;
        mlp.forward(&f3)?
    };
    let values = ops::reshape(&values, &[m, 4, cfg.c])?;
    let e = ops::weighted_sum(&weights, &values)?;
    ops::reshape(&e, &[hh, ww, cfg.c])
}

/// A single affine layer over `[f1, S_pa(C_q), rel]` is the sum of affine
/// maps over the three blocks, so the LR block is evaluated once per LR
/// pixel and the HR block once per HR pixel before gathering.
fn factored_affine(
    f1_lr: &Tensor,
    spa_rows: &Tensor,
    rel: &Tensor,
    table: &QueryTable,
    cfg: &FusionConfig,
    mlp: &Mlp,
) -> Result<Tensor> {
    let layer = &mlp.layers[0];
    let weight = layer.weight.tensor();
    let zero_bias = Tensor::zeros(&[cfg.c]);
    let f1_width = cfg.f1_width();

    let w_lr = ops::narrow(weight, 1, 0, f1_width)?;
    let lr_part = ops::linear(f1_lr, &w_lr, layer.bias.tensor())?;
    let mut acc = ops::gather_rows(&lr_part, &table.neighbor)?;
    let mut col = f1_width;
    if cfg.use_hr_injection {
        let w_hr = ops::narrow(weight, 1, col, cfg.d2)?;
        let hr_part = ops::linear(spa_rows, &w_hr, &zero_bias)?;
        acc = ops::add(&acc, &ops::gather_rows(&hr_part, &table.query_of_row)?)?;
        col += cfg.d2;
    }
    if cfg.use_rel_coord {
        let w_rel = ops::narrow(weight, 1, col, 2)?;
        acc = ops::add(&acc, &ops::linear(rel, &w_rel, &zero_bias)?)?;
    }
    Ok(acc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{all_queries, normalized_grid};
    use crate::tensor::Parameter;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn t(shape: &[usize], data: Vec<f64>) -> Tensor {
        Tensor::new(shape, data).unwrap()
    }

    fn rand_t(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
        let n = shape.iter().product();
        t(shape, (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect())
    }

    fn small_cfg(d1: usize, d2: usize, c: usize, r: usize) -> FusionConfig {
        FusionConfig { d1, d2, c, r, ..FusionConfig::default() }
    }

    #[test]
    fn downsample_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = rand_t(&mut rng, &[4, 4, 2]);
        assert_eq!(downsample_spatial(&x, 1).unwrap().data(), x.data());
        let c = downsample_spatial(&Tensor::full(&[4, 4, 3], 0.3), 2).unwrap();
        assert!(c.data().iter().all(|&v| (v - 0.3).abs() < 1e-15));

        let y = downsample_spatial(&x, 2).unwrap();
        assert_eq!(y.shape(), &[2, 2, 2]);
        for bi in 0..2 {
            for bj in 0..2 {
                for ch in 0..2 {
                    let mut s = 0.0;
                    for i in 0..2 {
                        for j in 0..2 {
                            s += x.data()[((bi * 2 + i) * 4 + bj * 2 + j) * 2 + ch];
                        }
                    }
                    assert!((y.data()[(bi * 2 + bj) * 2 + ch] - s / 4.0).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn feature_assembly_order_and_switches() {
        let cfg = small_cfg(2, 1, 4, 1);
        let f1 = build_f1(&t(&[2], vec![1.0, 2.0]), &t(&[1], vec![3.0]), &cfg).unwrap();
        assert_eq!(f1.data(), &[1.0, 2.0, 3.0]);
        let f1z = build_f1(&t(&[2], vec![1.0, 2.0]), &t(&[1], vec![0.0]), &cfg).unwrap();
        assert_eq!(&f1z.data()[..2], &[1.0, 2.0]);
        let off = FusionConfig { use_lr_injection: false, ..cfg };
        assert_eq!(build_f1(&t(&[2], vec![1.0, 2.0]), &t(&[1], vec![3.0]), &off).unwrap().data(), &[1.0, 2.0]);

        let cfg2 = small_cfg(2, 2, 4, 1);
        let f1 = t(&[4], vec![1.0, 2.0, 3.0, 4.0]);
        let f1_3 = t(&[3], vec![1.0, 2.0, 3.0]);
        let cfg3 = FusionConfig { use_lr_injection: false, d1: 3, ..cfg2 };
        let f2 = build_f2(&f1_3, &t(&[2], vec![8.0, 9.0]), &cfg3).unwrap();
        assert_eq!(f2.data(), &[1.0, 2.0, 3.0, 8.0, 9.0]);
        let hr_off = FusionConfig { use_hr_injection: false, ..cfg2 };
        assert_eq!(build_f2(&f1, &t(&[2], vec![8.0, 9.0]), &hr_off).unwrap().data(), f1.data());
        let f2z = build_f2(&f1, &t(&[2], vec![0.0, 0.0]), &cfg2).unwrap();
        assert_eq!(&f2z.data()[4..], &[0.0, 0.0]);

        let f3 = build_f3(&f2z, &t(&[2], vec![0.0, 0.0]), &cfg2).unwrap();
        assert_eq!(&f3.data()[6..], &[0.0, 0.0]);
        assert_eq!(f3.numel(), cfg2.d1 + cfg2.d2 + cfg2.d2 + 2);
        assert_eq!(f3.numel(), cfg2.mlp_input_width());
        let rel_off = FusionConfig { use_rel_coord: false, ..cfg2 };
        assert_eq!(build_f3(&f2z, &t(&[2], vec![0.1, 0.2]), &rel_off).unwrap().data(), f2z.data());
    }

    #[test]
    fn mlp_width_follows_switches() {
        for bits in 0..8u8 {
            let cfg = FusionConfig {
                use_lr_injection: bits & 1 != 0,
                use_hr_injection: bits & 2 != 0,
                use_rel_coord: bits & 4 != 0,
                ..small_cfg(5, 3, 4, 2)
            };
            let expect =
                5 + if bits & 1 != 0 { 3 } else { 0 } + if bits & 2 != 0 { 3 } else { 0 } + if bits & 4 != 0 { 2 } else { 0 };
            assert_eq!(cfg.mlp_input_width(), expect);
        }
    }

    fn set_affine(mlp: &mut Mlp, weight: Vec<f64>, bias: Vec<f64>) {
        let (o, i) = (mlp.layers[0].d_out(), mlp.layers[0].d_in());
        mlp.layers[0].weight = Parameter::new("w", &[o, i], weight).unwrap();
        mlp.layers[0].bias = Parameter::new("b", &[o], bias).unwrap();
    }

    #[test]
    fn identical_neighbours_give_mlp_of_f3() {
        // r = 1 with constant features: all neighbours carry the same code
        let cfg = FusionConfig { use_rel_coord: false, ..small_cfg(2, 1, 3, 1) };
        let spe = Tensor::full(&[3, 3, 2], 0.4);
        let spa = Tensor::full(&[3, 3, 1], -0.2);
        let queries = all_queries(&normalized_grid(3, 3).unwrap(), 3, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mlp = Mlp::new("m", &cfg.mlp_widths(), &mut rng).unwrap();
        for mode in [WeightMode::Area, WeightMode::Cosine] {
            let cfg = FusionConfig { weight_mode: mode, ..cfg };
            let e = fuse_map(&spe, &spa, &queries, &cfg, &mlp).unwrap();
            let f3 = t(&[4], vec![0.4, 0.4, -0.2, -0.2]);
            let expect = mlp.forward(&f3).unwrap();
            for px in e.data().chunks(3) {
                for (a, b) in px.iter().zip(expect.data()) {
                    assert!((a - b).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn area_mode_on_a_centre_selects_its_f3() {
        // r = 1 and an identity-like MLP: interior pixels return their own f3
        let cfg = FusionConfig { weight_mode: WeightMode::Area, ..small_cfg(2, 1, 7, 1) };
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let spe = rand_t(&mut rng, &[3, 3, 2]);
        let spa = rand_t(&mut rng, &[3, 3, 1]);
        let queries = all_queries(&normalized_grid(3, 3).unwrap(), 3, 3);
        let mut mlp = Mlp::new("m", &cfg.mlp_widths(), &mut rng).unwrap();
        let mut eye = vec![0.0; 42];
        (0..6).for_each(|i| eye[i * 7] = 1.0);
        set_affine(&mut mlp, eye, vec![0.0; 7]);
        let e = fuse_map(&spe, &spa, &queries, &cfg, &mlp).unwrap();
        let k = 4; // centre pixel (1, 1)
        let expect = [spe.data()[k * 2], spe.data()[k * 2 + 1], spa.data()[k], spa.data()[k], 0.0, 0.0];
        assert_eq!(&e.data()[k * 7..k * 7 + 6], &expect);
    }

    #[test]
    fn factored_and_generic_paths_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let spe = rand_t(&mut rng, &[2, 2, 3]);
        let spa = rand_t(&mut rng, &[8, 8, 2]);
        let queries = all_queries(&normalized_grid(8, 8).unwrap(), 2, 2);
        for bits in 0..8u8 {
            let cfg = FusionConfig {
                use_lr_injection: bits & 1 != 0,
                use_hr_injection: bits & 2 != 0,
                use_rel_coord: bits & 4 != 0,
                ..small_cfg(3, 2, 4, 4)
            };
            let mlp = Mlp::new("m", &cfg.mlp_widths(), &mut rng).unwrap();
            let fast = fuse_map(&spe, &spa, &queries, &cfg, &mlp).unwrap();

            // the generic path, assembled by hand
            let table = QueryTable::new(&queries, 2, 2);
            let spe_rows = ops::reshape(&spe, &[4, 3]).unwrap();
            let spa_rows = ops::reshape(&spa, &[64, 2]).unwrap();
            let spa_lr = ops::reshape(&downsample_spatial(&spa, 4).unwrap(), &[4, 2]).unwrap();
            let f1_lr = build_f1(&spe_rows, &spa_lr, &cfg).unwrap();
            let f1 = ops::gather_rows(&f1_lr, &table.neighbor).unwrap();
            let spa_q = ops::gather_rows(&spa_rows, &table.query_of_row).unwrap();
            let f2 = build_f2(&f1, &spa_q, &cfg).unwrap();
            let f3 = build_f3(&f2, &t(&[256, 2], table.rel.clone()), &cfg).unwrap();
            let vals = ops::reshape(&mlp.forward(&f3).unwrap(), &[64, 4, 4]).unwrap();
            let anchor = ops::gather_rows(&f1_lr, &table.nearest).unwrap();
            let logits =
                ops::neighbor_logits(&ops::reshape(&f1, &[64, 4, cfg.f1_width()]).unwrap(), &anchor, LogitMode::Dot).unwrap();
            let slow = ops::weighted_sum(&ops::softmax_lastdim(&logits), &vals).unwrap();
            for (a, b) in fast.data().iter().zip(slow.data()) {
                assert!((a - b).abs() < 1e-12, "switches {bits:03b}");
            }
        }
    }

    #[test]
    fn rejects_inconsistent_inputs() {
        let cfg = small_cfg(2, 2, 3, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mlp = Mlp::new("m", &cfg.mlp_widths(), &mut rng).unwrap();
        let queries = all_queries(&normalized_grid(4, 4).unwrap(), 2, 2);
        let spe = Tensor::zeros(&[2, 2, 2]);
        let err = fuse_map(&spe, &Tensor::zeros(&[6, 4, 2]), &queries, &cfg, &mlp).unwrap_err();
        assert!(err.to_string().contains("HR height"), "{err}");
        let err = fuse_map(&Tensor::zeros(&[2, 2, 5]), &Tensor::zeros(&[4, 4, 2]), &queries, &cfg, &mlp).unwrap_err();
        assert!(err.to_string().contains("channels"), "{err}");
        let narrow = Mlp::new("m", &[3, 3], &mut rng).unwrap();
        assert!(fuse_map(&spe, &Tensor::zeros(&[4, 4, 2]), &queries, &cfg, &narrow).is_err());
    }
}
