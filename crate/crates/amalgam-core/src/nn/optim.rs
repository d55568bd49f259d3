//! Momentum SGD with L2 weight decay.

use crate::error::{Error, Result};

use super::{Gradients, LayerGrads, Network};

/// Momentum SGD. Weight decay is added to the gradient before the momentum
/// update: `v <- momentum*v + (g + wd*param); param <- param - lr*v`.
#[derive(Clone, Debug)]
pub struct SgdOptimizer {
    momentum: f64,
    weight_decay: f64,
    velocity: Vec<LayerGrads>,
}

impl SgdOptimizer {
    pub fn new(net: &Network, momentum: f64, weight_decay: f64) -> Self {
        let velocity = net
            .layers()
            .iter()
            .map(|l| LayerGrads {
                weights: vec![0.0; l.weights().len()],
                biases: vec![0.0; l.out_dim()],
            })
            .collect();
        SgdOptimizer { momentum, weight_decay, velocity }
    }

    pub fn step(&mut self, net: &mut Network, grads: &Gradients, lr: f64) -> Result<()> {
        if lr <= 0.0 {
            return Err(Error::InvalidConfig(format!("learning rate must be positive, got {lr}")));
        }
        if grads.layers.len() != self.velocity.len() {
            return Err(Error::ShapeMismatch("gradient layer count".into()));
        }
        if !grads.is_finite() {
            return Err(Error::NonFinite("parameter gradients".into()));
        }
        for ((layer, lg), vel) in
            net.layers_mut().iter_mut().zip(&grads.layers).zip(&mut self.velocity)
        {
            if lg.weights.len() != layer.weights().len() || lg.biases.len() != layer.biases().len()
            {
                return Err(Error::ShapeMismatch("gradient shape".into()));
            }
            for ((w, &g), v) in
                layer.weights_mut().iter_mut().zip(&lg.weights).zip(&mut vel.weights)
            {
                *v = self.momentum * *v + (g + self.weight_decay * *w);
                *w -= lr * *v;
            }
            for ((b, &g), v) in layer.biases_mut().iter_mut().zip(&lg.biases).zip(&mut vel.biases)
            {
                *v = self.momentum * *v + (g + self.weight_decay * *b);
                *b -= lr * *v;
            }
        }
        Ok(())
    }
}
