//! Classification losses: focal loss over softmax outputs, frequency-derived
//! class weights, and binary cross-entropy on logits.

use crate::error::{Error, Result};
use crate::numeric::ops::{sigmoid, softmax};

/// Probabilities below this floor are clamped before taking logs.
pub const PROB_FLOOR: f64 = 1e-12;

/// Result of a focal-loss evaluation.
#[derive(Clone, Debug)]
pub struct FocalLoss {
    pub loss: f64,
    /// Gradient of the loss with respect to the input logits.
    pub grad: Vec<f64>,
    /// True when the true-class probability hit [`PROB_FLOOR`].
    pub clamped: bool,
}

/// Focal loss −w_t (1 − p_t)^λ ln p_t where p = softmax(logits) and t is the
/// target class. λ = 0 recovers weighted cross-entropy. The gradient is exact
/// for the unclamped case; when p_t is floored the gradient is computed at
/// the floored value.
pub fn focal_loss(logits: &[f64], target: usize, weights: &[f64], lambda: f64) -> Result<FocalLoss> {
    if weights.len() != logits.len() {
        return Err(Error::dimension(
            "focal_loss",
            format!("{} logits, {} weights", logits.len(), weights.len()),
        ));
    }
    if target >= logits.len() {
        return Err(Error::domain(
            "focal_loss",
            format!("target {target} out of range for {} classes", logits.len()),
        ));
    }
    if lambda < 0.0 {
        return Err(Error::domain("focal_loss", "lambda must be nonnegative"));
    }
    let p = softmax(logits)?;
    let raw = p[target];
    let clamped = raw < PROB_FLOOR;
    let pt = raw.max(PROB_FLOOR);
    let w = weights[target];
    let focus = (1.0 - pt).powf(lambda);
    let loss = -w * focus * pt.ln();

    // dL/dp_t, with the λ (1−p_t)^{λ−1} term dropped at λ = 0 where the
    // modulating factor is constant.
    let dfocus = if lambda == 0.0 {
        0.0
    } else {
        lambda * (1.0 - pt).powf(lambda - 1.0)
    };
    let dl_dpt = w * (dfocus * pt.ln() - focus / pt);
    // p_t depends on every logit: dp_t/dz_k = p_t (δ_tk − p_k).
    let grad: Vec<f64> = p
        .iter()
        .enumerate()
        .map(|(k, pk)| {
            let delta = if k == target { 1.0 } else { 0.0 };
            dl_dpt * pt * (delta - pk)
        })
        .collect();
    Ok(FocalLoss { loss, grad, clamped })
}

/// Per-class weights from training-set frequencies: softmax over the vector
/// of ratios (Σ n) / n_t, so rarer classes receive larger weights. The
/// softmax uses max-subtraction, which the extreme ratios of real relation
/// histograms make mandatory.
pub fn class_weights(counts: &[u64]) -> Result<Vec<f64>> {
    if counts.is_empty() {
        return Err(Error::domain("class_weights", "empty counts"));
    }
    if let Some(i) = counts.iter().position(|&c| c == 0) {
        return Err(Error::domain(
            "class_weights",
            format!("class {i} has zero count"),
        ));
    }
    let total: u64 = counts.iter().sum();
    let ratios: Vec<f64> = counts.iter().map(|&c| total as f64 / c as f64).collect();
    softmax(&ratios)
}

/// Binary cross-entropy on a logit, numerically stable form.
/// Returns (loss, d loss / d logit).
pub fn bce_with_logit(logit: f64, target: f64) -> (f64, f64) {
    debug_assert!((0.0..=1.0).contains(&target));
    let loss = logit.max(0.0) - logit * target + (-logit.abs()).exp().ln_1p();
    let grad = sigmoid(logit) - target;
    (loss, grad)
}
