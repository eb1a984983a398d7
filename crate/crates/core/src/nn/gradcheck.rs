//! Central finite-difference check of `loss_and_grads`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::model::Model;
use crate::error::Result;

/// Denominator floor for the relative error, so components that are zero
/// analytically and numerically do not divide by zero.
pub const REL_FLOOR: f64 = 1e-7;

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    /// Components compared.
    pub checked: usize,
    /// Components skipped because `w ± h` straddles a ReLU, pooling or
    /// clamp boundary, where the central difference is not a derivative.
    pub skipped_kinks: usize,
    pub max_rel_error: f64,
    pub worst_tensor: String,
    pub worst_index: usize,
    pub worst_analytic: f64,
    pub worst_numeric: f64,
}

/// `|a − n| / max(|a|, |n|, REL_FLOOR)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

/// Compares every gradient component against `(L(w+h) − L(w−h)) / 2h`.
/// Each loss evaluation is in training mode with a dropout generator
/// re-seeded from `dropout_seed`, so all evaluations share one mask.
pub fn gradient_check(
    model: &Model<f64>,
    images: &[Vec<f64>],
    labels: &[usize],
    h: f64,
    dropout_seed: u64,
) -> Result<GradCheckReport> {
    let refs: Vec<&[f64]> = images.iter().map(Vec::as_slice).collect();
    let rng = || ChaCha8Rng::seed_from_u64(dropout_seed);
    let analytic = model.loss_and_grads(&refs, labels, &mut rng())?.grads;
    let (_, base_pattern) = model.train_loss_with_pattern(&refs, labels, &mut rng())?;
    let names: Vec<String> = model.arch.tensor_specs().into_iter().map(|(n, _)| n).collect();
    let mut probe = model.clone();
    let mut report = GradCheckReport {
        checked: 0,
        skipped_kinks: 0,
        max_rel_error: 0.0,
        worst_tensor: String::new(),
        worst_index: 0,
        worst_analytic: 0.0,
        worst_numeric: 0.0,
    };
    for (t, name) in names.iter().enumerate() {
        for i in 0..probe.params.tensors[t].len() {
            let orig = probe.params.tensors[t][i];
            probe.params.tensors[t][i] = orig + h;
            let (plus, p_plus) = probe.train_loss_with_pattern(&refs, labels, &mut rng())?;
            probe.params.tensors[t][i] = orig - h;
            let (minus, p_minus) = probe.train_loss_with_pattern(&refs, labels, &mut rng())?;
            probe.params.tensors[t][i] = orig;
            if p_plus != base_pattern || p_minus != base_pattern {
                report.skipped_kinks += 1;
                continue;
            }
            let numeric = (plus - minus) / (2.0 * h);
            let a = analytic.tensors[t][i];
            let err = relative_error(a, numeric);
            report.checked += 1;
            if err > report.max_rel_error {
                report.max_rel_error = err;
                report.worst_tensor = name.clone();
                report.worst_index = i;
                report.worst_analytic = a;
                report.worst_numeric = numeric;
            }
        }
    }
    Ok(report)
}
