//! Scalar loss functions shared by every trainer.

use crate::error::{Error, Result};

/// Probabilities are floored at this value before any log.
pub const PROB_FLOOR: f64 = 1e-12;

/// Numerically stable softmax (max subtraction).
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Cross-entropy `-log p[label]` with the probability floored at
/// [`PROB_FLOOR`].
pub fn cross_entropy(probs: &[f64], label: usize) -> Result<f64> {
    if label >= probs.len() {
        return Err(Error::LabelOutOfRange { label, classes: probs.len() });
    }
    Ok(-(probs[label].max(PROB_FLOOR)).ln())
}

/// Squared Euclidean distance between two logit vectors (no averaging).
pub fn mse_logits(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::ShapeMismatch(format!("{} vs {} logits", a.len(), b.len())));
    }
    Ok(a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum())
}

/// `KL(p || q) = Σ p_i log(p_i / q_i)` with both arguments floored at
/// [`PROB_FLOOR`] inside the log.
pub fn kl_div(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::ShapeMismatch(format!("{} vs {} probs", p.len(), q.len())));
    }
    let mut sum = 0.0;
    for (&pi, &qi) in p.iter().zip(q) {
        if pi > 0.0 {
            sum += pi * (pi.max(PROB_FLOOR) / qi.max(PROB_FLOOR)).ln();
        }
    }
    Ok(sum.max(0.0))
}
