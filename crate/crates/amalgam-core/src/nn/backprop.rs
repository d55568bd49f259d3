//! Exact reverse-mode gradients of the mean batch loss.

use crate::error::{Error, Result};

use super::loss::{cross_entropy, kl_div, mse_logits, softmax, PROB_FLOOR};
use super::{Batch, Network};

/// Which loss drives the backward pass. Supervision targets are constants:
/// no gradient flows into them.
#[derive(Clone, Debug)]
pub enum LossKind<'a> {
    /// Plain cross-entropy against the batch labels.
    CrossEntropy,
    /// `(1-alpha)*CE + alpha*||z - target||^2`, one target logit vector per
    /// sample.
    LogitMatch { alpha: f64, targets: &'a [Vec<f64>] },
    /// `(1-alpha)*CE + alpha*KL(p || target)`, one target probability vector
    /// per sample.
    ProbMatch { alpha: f64, targets: &'a [Vec<f64>] },
}

/// Mean batch loss split into its components; `total` is exactly
/// `(1-alpha)*ce + alpha*kd` as reported.
#[derive(Clone, Copy, Debug)]
pub struct BatchLoss {
    pub total: f64,
    pub ce: f64,
    pub kd: f64,
}

/// Per-layer parameter gradients, same shapes as the layer parameters.
#[derive(Clone, Debug)]
pub struct LayerGrads {
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

/// Gradients of the mean batch loss.
#[derive(Clone, Debug)]
pub struct Gradients {
    pub layers: Vec<LayerGrads>,
    /// One row per sample when requested.
    pub inputs: Option<Vec<Vec<f64>>>,
}

impl Gradients {
    pub fn zeros_like(net: &Network) -> Self {
        Gradients {
            layers: net
                .layers()
                .iter()
                .map(|l| LayerGrads {
                    weights: vec![0.0; l.weights().len()],
                    biases: vec![0.0; l.out_dim()],
                })
                .collect(),
            inputs: None,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.layers.iter().all(|l| {
            l.weights.iter().all(|v| v.is_finite()) && l.biases.iter().all(|v| v.is_finite())
        })
    }
}

fn check_targets(targets: &[Vec<f64>], batch: usize, classes: usize) -> Result<()> {
    if targets.len() != batch {
        return Err(Error::ShapeMismatch(format!(
            "{} supervision targets for {batch} samples",
            targets.len()
        )));
    }
    if targets.iter().any(|t| t.len() != classes) {
        return Err(Error::ShapeMismatch("supervision target width != class count".into()));
    }
    Ok(())
}

/// Computes the mean batch loss and its exact gradients w.r.t. every
/// parameter, and w.r.t. the inputs when `want_input_grads` is set.
pub fn backward(
    net: &Network,
    batch: &Batch,
    loss: &LossKind<'_>,
    want_input_grads: bool,
) -> Result<(BatchLoss, Gradients)> {
    let classes = net.class_count();
    let b = batch.len();
    if batch.inputs[0].len() != net.input_dim() {
        return Err(Error::ShapeMismatch(format!(
            "batch dim {} != network input_dim {}",
            batch.inputs[0].len(),
            net.input_dim()
        )));
    }
    for &label in &batch.labels {
        if label >= classes {
            return Err(Error::LabelOutOfRange { label, classes });
        }
    }
    let alpha = match loss {
        LossKind::CrossEntropy => 0.0,
        LossKind::LogitMatch { alpha, targets } => {
            check_targets(targets, b, classes)?;
            *alpha
        }
        LossKind::ProbMatch { alpha, targets } => {
            check_targets(targets, b, classes)?;
            *alpha
        }
    };

    let mut grads = Gradients::zeros_like(net);
    let mut input_grads = if want_input_grads { Some(Vec::with_capacity(b)) } else { None };
    let mut ce_sum = 0.0;
    let mut kd_sum = 0.0;
    let scale = 1.0 / b as f64;

    for (s, (x, &y)) in batch.inputs.iter().zip(&batch.labels).enumerate() {
        let trace = net.trace_for(x);
        let logits = trace.acts.last().expect("output layer");
        let probs = softmax(logits);
        ce_sum += cross_entropy(&probs, y)?;

        // dL/dz at the (linear) output layer, without the 1/B factor.
        let mut dz: Vec<f64> = probs.clone();
        dz[y] -= 1.0;
        match loss {
            LossKind::CrossEntropy => {}
            LossKind::LogitMatch { alpha, targets } => {
                let t = &targets[s];
                kd_sum += mse_logits(logits, t)?;
                for ((dzj, &zj), &tj) in dz.iter_mut().zip(logits).zip(t) {
                    *dzj = (1.0 - alpha) * *dzj + alpha * 2.0 * (zj - tj);
                }
            }
            LossKind::ProbMatch { alpha, targets } => {
                let q = &targets[s];
                kd_sum += kl_div(&probs, q)?;
                // d KL(p||q) / dz_j = p_j (g_j - sum_i p_i g_i), g = log(p/q);
                // the softmax Jacobian kills any constant shift in g.
                let g: Vec<f64> = probs
                    .iter()
                    .zip(q)
                    .map(|(&pi, &qi)| (pi.max(PROB_FLOOR) / qi.max(PROB_FLOOR)).ln())
                    .collect();
                let dot: f64 = probs.iter().zip(&g).map(|(p, gi)| p * gi).sum();
                for ((dzj, &pj), &gj) in dz.iter_mut().zip(&probs).zip(&g) {
                    *dzj = (1.0 - alpha) * *dzj + alpha * pj * (gj - dot);
                }
            }
        }

        // Backpropagate delta through the layers, accumulating 1/B-scaled
        // parameter gradients.
        let mut delta = dz;
        for l in (0..net.layers().len()).rev() {
            let layer = &net.layers()[l];
            let below: &[f64] = if l == 0 { x } else { &trace.acts[l - 1] };
            let lg = &mut grads.layers[l];
            for (o, &d) in delta.iter().enumerate() {
                let row = o * layer.in_dim();
                let sd = scale * d;
                for (i, &a) in below.iter().enumerate() {
                    lg.weights[row + i] += sd * a;
                }
                lg.biases[o] += sd;
            }
            if l > 0 || want_input_grads {
                let mut prev = vec![0.0; layer.in_dim()];
                for (o, &d) in delta.iter().enumerate() {
                    let row = &layer.weights()[o * layer.in_dim()..(o + 1) * layer.in_dim()];
                    for (p, &w) in prev.iter_mut().zip(row) {
                        *p += w * d;
                    }
                }
                if l > 0 {
                    for (p, &z) in prev.iter_mut().zip(&trace.pre[l - 1]) {
                        *p *= net.spec().activation.grad(z);
                    }
                }
                delta = prev;
            } else {
                delta = Vec::new();
            }
        }
        if let Some(ig) = input_grads.as_mut() {
            // delta now holds dl_s/dx; the batch loss carries the 1/B factor.
            ig.push(delta.iter().map(|d| d * scale).collect());
        }
    }

    let ce = ce_sum * scale;
    let kd = kd_sum * scale;
    let total = match loss {
        LossKind::CrossEntropy => ce,
        _ => (1.0 - alpha) * ce + alpha * kd,
    };
    grads.inputs = input_grads;
    Ok((BatchLoss { total, ce, kd }, grads))
}

/// Gradient of the single-sample cross-entropy loss w.r.t. the input.
///
/// Fast path for attack loops: no parameter gradients are accumulated.
pub fn input_gradient_ce(net: &Network, x: &[f64], label: usize) -> Result<Vec<f64>> {
    let grads = input_gradients_ce(net, std::slice::from_ref(&x.to_vec()), label)?;
    Ok(grads.into_iter().next().expect("one row"))
}

/// Input gradients of per-sample cross-entropy for several inputs sharing one
/// label. Each row is the gradient of that sample's own (unaveraged) loss.
pub fn input_gradients_ce(net: &Network, xs: &[Vec<f64>], label: usize) -> Result<Vec<Vec<f64>>> {
    let classes = net.class_count();
    if label >= classes {
        return Err(Error::LabelOutOfRange { label, classes });
    }
    xs.iter()
        .map(|x| {
            if x.len() != net.input_dim() {
                return Err(Error::ShapeMismatch(format!(
                    "input dim {} != network input_dim {}",
                    x.len(),
                    net.input_dim()
                )));
            }
            let trace = net.trace_for(x);
            let logits = trace.acts.last().expect("output layer");
            let mut delta = softmax(logits);
            delta[label] -= 1.0;
            for l in (0..net.layers().len()).rev() {
                let layer = &net.layers()[l];
                let mut prev = vec![0.0; layer.in_dim()];
                for (o, &d) in delta.iter().enumerate() {
                    let row = &layer.weights()[o * layer.in_dim()..(o + 1) * layer.in_dim()];
                    for (p, &w) in prev.iter_mut().zip(row) {
                        *p += w * d;
                    }
                }
                if l > 0 {
                    for (p, &z) in prev.iter_mut().zip(&trace.pre[l - 1]) {
                        *p *= net.spec().activation.grad(z);
                    }
                }
                delta = prev;
            }
            Ok(delta)
        })
        .collect()
}
