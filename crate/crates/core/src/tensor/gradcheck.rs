//! Central finite-difference checking of analytic gradients.
//!
//! The check only ever evaluates the forward function, so it is independent
//! of every backward rule it verifies.

use super::Tensor;

#[derive(Debug, Clone, Copy)]
pub struct GradCheck {
    /// Finite-difference step.
    pub h: f64,
    /// Lower bound on the relative-error denominator, so that gradients which
    /// are zero up to rounding do not blow the ratio up.
    pub floor: f64,
    /// Entries whose one-sided differences disagree by more than this
    /// fraction sit on a kink (relu / |·|) and are excluded.
    pub kink_tol: f64,
}

impl Default for GradCheck {
    fn default() -> Self {
        GradCheck { h: 1e-5, floor: 1e-6, kink_tol: 1e-2 }
    }
}

#[derive(Debug, Clone, Default)]
pub struct GradReport {
    pub checked: usize,
    pub skipped_kinks: usize,
    pub max_rel_error: f64,
    /// `(param index, element, analytic, numeric)` of the worst entry.
    pub worst: Option<(usize, usize, f64, f64)>,
}

/// Compares `d f / d params` from [`Tensor::backward`] with central
/// differences. `f` must rebuild its graph from the slice it receives and
/// return a scalar.
pub fn check_gradients(params: &[Tensor], f: impl Fn(&[Tensor]) -> Tensor, cfg: GradCheck) -> GradReport {
    let leaves: Vec<Tensor> = params.iter().map(|p| Tensor::param(p.shape(), p.data().to_vec()).expect("same shape")).collect();
    let loss = f(&leaves);
    loss.backward().expect("scalar loss");
    let base = loss.item();

    let mut report = GradReport::default();
    for (pi, p) in leaves.iter().enumerate() {
        let analytic = p.grad().unwrap_or_else(|| vec![0.0; p.numel()]);
        for e in 0..p.numel() {
            let eval = |delta: f64| {
                let mut data = p.data().to_vec();
                data[e] += delta;
                let mut trial = leaves.clone();
                trial[pi] = Tensor::new(p.shape(), data).expect("same shape");
                f(&trial).item()
            };
            let (plus, minus) = (eval(cfg.h), eval(-cfg.h));
            let fwd = (plus - base) / cfg.h;
            let bwd = (base - minus) / cfg.h;
            if (fwd - bwd).abs() > cfg.kink_tol * fwd.abs().max(bwd.abs()).max(1e-3) {
                report.skipped_kinks += 1;
                continue;
            }
            let numeric = (plus - minus) / (2.0 * cfg.h);
            let a = analytic[e];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(cfg.floor);
            report.checked += 1;
            if rel > report.max_rel_error {
                report.max_rel_error = rel;
                report.worst = Some((pi, e, a, numeric));
            }
        }
    }
    report
}
