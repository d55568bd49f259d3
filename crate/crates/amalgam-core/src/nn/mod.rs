//! Dense feed-forward networks with exact gradients.
//!
//! The engine supports exactly the layer stack the trainers need: affine
//! layers with relu or tanh on hidden layers and a linear output layer (raw
//! logits, required for logit matching). Gradients are exact reverse-mode,
//! available w.r.t. both parameters and inputs.

mod backprop;
mod io;
mod loss;
mod optim;

pub use backprop::{backward, input_gradient_ce, input_gradients_ce, BatchLoss, Gradients, LayerGrads, LossKind};
pub use io::fmt_f64;
pub use loss::{cross_entropy, kl_div, mse_logits, softmax, PROB_FLOOR};
pub use optim::SgdOptimizer;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Hidden-layer activation. The output layer is always linear.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Tanh,
}

impl Activation {
    #[inline]
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Tanh => x.tanh(),
        }
    }

    /// Derivative as a function of the pre-activation. relu'(0) := 0.
    #[inline]
    fn grad(self, pre: f64) -> f64 {
        match self {
            Activation::Relu => {
                if pre > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => {
                let t = pre.tanh();
                1.0 - t * t
            }
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "relu" => Ok(Activation::Relu),
            "tanh" => Ok(Activation::Tanh),
            other => Err(Error::InvalidSpec(format!("unknown activation `{other}`"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Tanh => "tanh",
        }
    }
}

/// Architecture description; the last layer width is the class count.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NetworkSpec {
    pub input_dim: usize,
    pub layer_widths: Vec<usize>,
    pub activation: Activation,
    pub init_seed: u64,
}

impl NetworkSpec {
    pub fn new(
        input_dim: usize,
        layer_widths: Vec<usize>,
        activation: Activation,
        init_seed: u64,
    ) -> Result<Self> {
        let spec = NetworkSpec { input_dim, layer_widths, activation, init_seed };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 {
            return Err(Error::InvalidSpec("input_dim must be >= 1".into()));
        }
        if self.layer_widths.is_empty() {
            return Err(Error::InvalidSpec("layer_widths must be non-empty".into()));
        }
        if self.layer_widths.iter().any(|&w| w == 0) {
            return Err(Error::InvalidSpec("layer widths must be positive".into()));
        }
        Ok(())
    }

    /// Number of output classes (width of the last layer).
    pub fn class_count(&self) -> usize {
        *self.layer_widths.last().expect("non-empty widths")
    }
}

/// One affine layer. Weights are row-major with shape `(out_dim, in_dim)`.
#[derive(Clone, Debug)]
pub struct Layer {
    in_dim: usize,
    out_dim: usize,
    weights: Vec<f64>,
    biases: Vec<f64>,
}

impl Layer {
    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn biases(&self) -> &[f64] {
        &self.biases
    }

    fn forward_into(&self, input: &[f64], out: &mut [f64]) {
        debug_assert_eq!(input.len(), self.in_dim);
        debug_assert_eq!(out.len(), self.out_dim);
        for (o, slot) in out.iter_mut().enumerate() {
            let row = &self.weights[o * self.in_dim..(o + 1) * self.in_dim];
            let mut sum = self.biases[o];
            for (w, x) in row.iter().zip(input) {
                sum += w * x;
            }
            *slot = sum;
        }
    }
}

/// A network: spec plus parameters.
#[derive(Clone, Debug)]
pub struct Network {
    spec: NetworkSpec,
    layers: Vec<Layer>,
}

impl Network {
    /// Builds a network with He-style fan-in uniform weights and zero biases,
    /// drawn deterministically from `spec.init_seed`.
    pub fn init(spec: &NetworkSpec) -> Result<Self> {
        spec.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(spec.init_seed);
        let mut layers = Vec::with_capacity(spec.layer_widths.len());
        let mut in_dim = spec.input_dim;
        for &out_dim in &spec.layer_widths {
            let limit = (6.0 / in_dim as f64).sqrt();
            let weights: Vec<f64> =
                (0..in_dim * out_dim).map(|_| rng.gen_range(-limit..limit)).collect();
            layers.push(Layer { in_dim, out_dim, weights, biases: vec![0.0; out_dim] });
            in_dim = out_dim;
        }
        Ok(Network { spec: spec.clone(), layers })
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.spec.input_dim
    }

    pub fn class_count(&self) -> usize {
        self.spec.class_count()
    }

    /// Logits for a single input.
    pub fn forward_one(&self, input: &[f64]) -> Result<Vec<f64>> {
        if input.len() != self.spec.input_dim {
            return Err(Error::ShapeMismatch(format!(
                "input dim {} != spec input_dim {}",
                input.len(),
                self.spec.input_dim
            )));
        }
        let trace = self.trace(input);
        Ok(trace.acts.into_iter().last().expect("at least one layer"))
    }

    /// Logits for a batch of inputs, one row per sample.
    pub fn forward(&self, inputs: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        inputs.iter().map(|x| self.forward_one(x)).collect()
    }

    /// Forward pass keeping the intermediate activations backward needs.
    fn trace(&self, input: &[f64]) -> Trace {
        let n_layers = self.layers.len();
        let mut pre = Vec::with_capacity(n_layers);
        let mut acts = Vec::with_capacity(n_layers);
        let mut cur = input.to_vec();
        for (l, layer) in self.layers.iter().enumerate() {
            let mut z = vec![0.0; layer.out_dim];
            layer.forward_into(&cur, &mut z);
            pre.push(z.clone());
            if l + 1 < n_layers {
                for v in z.iter_mut() {
                    *v = self.spec.activation.apply(*v);
                }
            }
            acts.push(z.clone());
            cur = z;
        }
        Trace { pre, acts }
    }

    /// Total number of scalar parameters.
    pub fn param_len(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.biases.len()).sum()
    }

    /// Reads a parameter by flat index (layer-major, weights then biases).
    pub fn param(&self, mut idx: usize) -> f64 {
        for layer in &self.layers {
            if idx < layer.weights.len() {
                return layer.weights[idx];
            }
            idx -= layer.weights.len();
            if idx < layer.biases.len() {
                return layer.biases[idx];
            }
            idx -= layer.biases.len();
        }
        panic!("parameter index out of range");
    }

    /// Writes a parameter by flat index (layer-major, weights then biases).
    pub fn set_param(&mut self, mut idx: usize, value: f64) {
        for layer in &mut self.layers {
            if idx < layer.weights.len() {
                layer.weights[idx] = value;
                return;
            }
            idx -= layer.weights.len();
            if idx < layer.biases.len() {
                layer.biases[idx] = value;
                return;
            }
            idx -= layer.biases.len();
        }
        panic!("parameter index out of range");
    }

    pub(crate) fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }
}

impl Layer {
    pub(crate) fn weights_mut(&mut self) -> &mut [f64] {
        &mut self.weights
    }

    pub(crate) fn biases_mut(&mut self) -> &mut [f64] {
        &mut self.biases
    }

    pub(crate) fn from_parts(in_dim: usize, out_dim: usize, weights: Vec<f64>, biases: Vec<f64>) -> Self {
        Layer { in_dim, out_dim, weights, biases }
    }
}

impl Network {
    pub(crate) fn from_parts(spec: NetworkSpec, layers: Vec<Layer>) -> Self {
        Network { spec, layers }
    }
}

/// Per-sample forward trace: pre-activations and post-activations per layer.
/// The last entry of `acts` is the raw logit vector.
pub(crate) struct Trace {
    pub pre: Vec<Vec<f64>>,
    pub acts: Vec<Vec<f64>>,
}

impl Network {
    pub(crate) fn trace_for(&self, input: &[f64]) -> Trace {
        self.trace(input)
    }
}

/// A labelled mini-batch.
#[derive(Clone, Debug)]
pub struct Batch {
    pub inputs: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
}

impl Batch {
    pub fn new(inputs: Vec<Vec<f64>>, labels: Vec<usize>) -> Result<Self> {
        if inputs.is_empty() {
            return Err(Error::InvalidSpec("batch must contain at least one sample".into()));
        }
        if inputs.len() != labels.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} inputs vs {} labels",
                inputs.len(),
                labels.len()
            )));
        }
        let d = inputs[0].len();
        if inputs.iter().any(|x| x.len() != d) {
            return Err(Error::ShapeMismatch("ragged batch rows".into()));
        }
        Ok(Batch { inputs, labels })
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }
}
