//! Four-neighbour interpolation weights and the weighted-sum interpolator.
//!
//! Two weight generators are provided:
//!
//! - [`area_weights`]: each corner is weighted by the area of the rectangle
//!   spanned by the query and the diagonally opposite corner, normalised by
//!   the total. On raw pixel values this is bilinear interpolation.
//! - [`cosine_weights`]: a softmax over similarity logits between the
//!   neighbours' fused codes and the code of the nearest neighbour. The
//!   default logit `‖a‖·‖b‖·cos⟨a,b⟩` is evaluated as the dot product
//!   `a·b`, which also sidesteps `0/0` at zero norm.

use crate::error::Result;
use crate::grid::NeighborQuery;
use crate::layers::Mlp;
use crate::tensor::{ops, Tensor};

pub use crate::tensor::ops::LogitMode;

/// Below this total area the query sits on a clamped centre line.
pub const DEGENERATE_AREA: f64 = 1e-15;

/// Interpolation weights of one query, aligned with
/// [`NeighborQuery::neighbors`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightSet {
    pub w: [f64; 4],
    /// Set when the total area vanished and a uniform fallback was used on at
    /// least one axis.
    pub degenerate: bool,
}

impl WeightSet {
    pub fn sum(&self) -> f64 {
        self.w.iter().sum()
    }
}

/// Area weights `w_i = A_i / A`, where `A_i` is the rectangle between the
/// query and the corner diagonally opposite `i`.
///
/// The total area factors as `(|Δr₀|+|Δr₁|)·(|Δc₀|+|Δc₁|)`. It only vanishes
/// when an axis is clamped (both bracketing indices equal) and the query lies
/// exactly on that centre line; that axis then splits its weight evenly over
/// its two identical entries, which leaves the interpolated value unchanged,
/// and the set is flagged. Both axes degenerate gives a uniform `0.25`.
pub fn area_weights(query: &NeighborQuery, _lr_height: usize, _lr_width: usize) -> WeightSet {
    let [d00, d01, d10, _] = query.rel;
    // |Δ| to the low/high bracketing centre on each axis
    let (r_lo, r_hi) = (d00[0].abs(), d10[0].abs());
    let (c_lo, c_hi) = (d00[1].abs(), d01[1].abs());
    let areas = [r_hi * c_hi, r_hi * c_lo, r_lo * c_hi, r_lo * c_lo];
    let total: f64 = areas.iter().sum();
    if total >= DEGENERATE_AREA {
        return WeightSet { w: areas.map(|a| a / total), degenerate: false };
    }
    let axis = |lo: f64, hi: f64| {
        let s = lo + hi;
        if s < DEGENERATE_AREA.sqrt() {
            [0.5, 0.5]
        } else {
            [hi / s, lo / s]
        }
    };
    let (wr, wc) = (axis(r_lo, r_hi), axis(c_lo, c_hi));
    WeightSet { w: [wr[0] * wc[0], wr[0] * wc[1], wr[1] * wc[0], wr[1] * wc[1]], degenerate: true }
}

/// Similarity logit between two codes under `mode`.
pub fn similarity_logit(a: &[f64], b: &[f64], mode: LogitMode) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    match mode {
        LogitMode::Dot => dot,
        LogitMode::Cosine => {
            let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
            let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
            if na == 0.0 || nb == 0.0 {
                0.0
            } else {
                dot / (na * nb)
            }
        }
    }
}

/// Softmax over the similarity of each neighbour code with the nearest code.
pub fn cosine_weights(nearest: &[f64], neighbors: [&[f64]; 4], mode: LogitMode) -> WeightSet {
    let logits = neighbors.map(|n| similarity_logit(nearest, n, mode));
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e = logits.map(|l| (l - max).exp());
    let total: f64 = e.iter().sum();
    WeightSet { w: e.map(|v| v / total), degenerate: false }
}

/// `Σ_i w_i · values_i`.
pub fn interpolate(weights: &WeightSet, values: [&[f64]; 4]) -> Vec<f64> {
    let mut out = vec![0.0; values[0].len()];
    for (w, v) in weights.w.iter().zip(values) {
        for (o, x) in out.iter_mut().zip(v) {
            *o += w * x;
        }
    }
    out
}

/// Batched, differentiable form of [`interpolate`]: `weights: [M, 4]`,
/// `values: [M, 4, C]` → `[M, C]`.
pub fn interpolate_batch(weights: &Tensor, values: &Tensor) -> Result<Tensor> {
    ops::weighted_sum(weights, values)
}

/// The baseline local-implicit interpoland: `mlp(concat(latent, rel))`.
///
/// `latent: [.., D]`, `rel: [.., 2]`; `mlp` must accept `D + 2` inputs.
pub fn liif_value(latent: &Tensor, rel: &Tensor, mlp: &Mlp) -> Result<Tensor> {
    let x = ops::concat_last(&[latent.clone(), rel.clone()])?;
    mlp.forward(&x)
}
