//! Dense feed-forward predictive model with per-layer activation traces.
//!
//! The model is deliberately small and explicit: flat row-major weight
//! buffers, 64-bit reals everywhere, and a forward pass that records every
//! hidden activation so downstream consumers (the loss estimator, backward)
//! can tap them.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Identity,
}

impl Activation {
    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Identity => x,
        }
    }
}

/// Shape and activation of one dense layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerSpec {
    pub fan_in: usize,
    pub fan_out: usize,
    pub activation: Activation,
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Layer {
    pub(crate) spec: LayerSpec,
    /// Row-major `fan_out x fan_in`.
    pub(crate) weights: Vec<f64>,
    pub(crate) biases: Vec<f64>,
}

/// The predictive network: dense layers, ReLU or identity activations, and
/// inverted dropout after each hidden activation.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub(crate) layers: Vec<Layer>,
    dropout_rate: f64,
    seed: u64,
}

/// Everything one forward pass produced: logits, post-activation hidden
/// vectors (post-dropout when dropout was active), and the dropout masks so
/// the pass can be differentiated or replayed exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTrace {
    pub(crate) input: Vec<f64>,
    pub logits: Vec<f64>,
    pub hidden_activations: Vec<Vec<f64>>,
    /// One mask per hidden layer when dropout was active with rate > 0;
    /// `true` marks a kept unit.
    pub dropout_masks: Option<Vec<Vec<bool>>>,
}

impl ForwardTrace {
    pub fn input(&self) -> &[f64] {
        &self.input
    }
}

impl Mlp {
    /// Build a network from a chain of layer widths `[d, h1, ..., C]` with
    /// ReLU hidden activations and an identity output layer. Weights use
    /// uniform fan-in-scaled initialization from a ChaCha stream seeded with
    /// `seed`; biases start at zero.
    pub fn new(dims: &[usize], dropout_rate: f64, seed: u64) -> Result<Self> {
        if dims.len() < 2 {
            return Err(Error::invalid_argument(
                "network needs at least input and output widths",
            ));
        }
        let last = dims.len() - 2;
        let specs: Vec<LayerSpec> = dims
            .windows(2)
            .enumerate()
            .map(|(i, w)| LayerSpec {
                fan_in: w[0],
                fan_out: w[1],
                activation: if i == last {
                    Activation::Identity
                } else {
                    Activation::Relu
                },
            })
            .collect();
        Mlp::from_specs(specs, dropout_rate, seed)
    }

    /// Build a network from explicit layer specs.
    pub fn from_specs(specs: Vec<LayerSpec>, dropout_rate: f64, seed: u64) -> Result<Self> {
        if specs.is_empty() {
            return Err(Error::invalid_argument("network needs at least one layer"));
        }
        if !(0.0..1.0).contains(&dropout_rate) {
            return Err(Error::invalid_argument("dropout rate must be in [0, 1)"));
        }
        for pair in specs.windows(2) {
            if pair[0].fan_out != pair[1].fan_in {
                return Err(Error::ShapeMismatch {
                    what: "layer chain",
                    expected: pair[0].fan_out,
                    actual: pair[1].fan_in,
                });
            }
        }
        for spec in &specs {
            if spec.fan_in == 0 || spec.fan_out == 0 {
                return Err(Error::invalid_argument("layer widths must be positive"));
            }
        }

        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = specs
            .into_iter()
            .map(|spec| {
                let limit = (6.0 / spec.fan_in as f64).sqrt();
                let weights = (0..spec.fan_in * spec.fan_out)
                    .map(|_| rng.random_range(-limit..limit))
                    .collect();
                Layer {
                    spec,
                    weights,
                    biases: vec![0.0; spec.fan_out],
                }
            })
            .collect();
        Ok(Mlp {
            layers,
            dropout_rate,
            seed,
        })
    }

    pub fn num_inputs(&self) -> usize {
        self.layers[0].spec.fan_in
    }

    /// Output width of the final layer (the number of classes).
    pub fn num_classes(&self) -> usize {
        self.layers.last().unwrap().spec.fan_out
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn num_hidden_layers(&self) -> usize {
        self.layers.len() - 1
    }

    /// Widths of the hidden layers, in order.
    pub fn hidden_widths(&self) -> Vec<usize> {
        self.layers[..self.layers.len() - 1]
            .iter()
            .map(|l| l.spec.fan_out)
            .collect()
    }

    pub fn layer_specs(&self) -> Vec<LayerSpec> {
        self.layers.iter().map(|l| l.spec).collect()
    }

    pub fn dropout_rate(&self) -> f64 {
        self.dropout_rate
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn layer_weights(&self, layer: usize) -> &[f64] {
        &self.layers[layer].weights
    }

    pub fn layer_biases(&self, layer: usize) -> &[f64] {
        &self.layers[layer].biases
    }

    /// Overwrite one layer's parameters (shape-checked).
    pub fn set_layer(&mut self, layer: usize, weights: Vec<f64>, biases: Vec<f64>) -> Result<()> {
        let spec = self.layers[layer].spec;
        if weights.len() != spec.fan_in * spec.fan_out {
            return Err(Error::ShapeMismatch {
                what: "layer weights",
                expected: spec.fan_in * spec.fan_out,
                actual: weights.len(),
            });
        }
        if biases.len() != spec.fan_out {
            return Err(Error::ShapeMismatch {
                what: "layer biases",
                expected: spec.fan_out,
                actual: biases.len(),
            });
        }
        self.layers[layer].weights = weights;
        self.layers[layer].biases = biases;
        Ok(())
    }

    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.biases.len())
            .sum()
    }

    /// All parameters flattened in layer order (weights then biases).
    pub fn params_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for layer in &self.layers {
            out.extend_from_slice(&layer.weights);
            out.extend_from_slice(&layer.biases);
        }
        out
    }

    /// Restore parameters from [`Mlp::params_flat`] layout.
    pub fn set_params_flat(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.param_count() {
            return Err(Error::ShapeMismatch {
                what: "flat parameters",
                expected: self.param_count(),
                actual: params.len(),
            });
        }
        let mut offset = 0;
        for layer in &mut self.layers {
            let w = layer.weights.len();
            layer.weights.copy_from_slice(&params[offset..offset + w]);
            offset += w;
            let b = layer.biases.len();
            layer.biases.copy_from_slice(&params[offset..offset + b]);
            offset += b;
        }
        Ok(())
    }

    pub(crate) fn param_blocks_mut(&mut self) -> Vec<&mut [f64]> {
        let mut blocks = Vec::with_capacity(self.layers.len() * 2);
        for layer in &mut self.layers {
            blocks.push(layer.weights.as_mut_slice());
            blocks.push(layer.biases.as_mut_slice());
        }
        blocks
    }

    /// Error if any parameter is non-finite.
    pub fn check_finite(&self) -> Result<()> {
        for (i, layer) in self.layers.iter().enumerate() {
            if layer.weights.iter().chain(&layer.biases).any(|v| !v.is_finite()) {
                return Err(Error::non_finite(format!("model layer {i} parameters")));
            }
        }
        Ok(())
    }

    /// Forward pass with dropout inactive.
    pub fn forward(&self, x: &[f64]) -> Result<ForwardTrace> {
        self.forward_impl(x, None)
    }

    /// Forward pass with dropout active. Masks are drawn from `rng`, one
    /// Bernoulli(1 - rate) draw per hidden unit in layer order; kept units
    /// are scaled by `1 / (1 - rate)`. With rate 0 this equals
    /// [`Mlp::forward`] and consumes no randomness.
    pub fn forward_dropout(&self, x: &[f64], rng: &mut ChaCha8Rng) -> Result<ForwardTrace> {
        if self.dropout_rate == 0.0 {
            self.forward_impl(x, None)
        } else {
            self.forward_impl(x, Some(rng))
        }
    }

    fn forward_impl(&self, x: &[f64], mut rng: Option<&mut ChaCha8Rng>) -> Result<ForwardTrace> {
        if x.len() != self.num_inputs() {
            return Err(Error::ShapeMismatch {
                what: "forward input",
                expected: self.num_inputs(),
                actual: x.len(),
            });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::non_finite("forward input"));
        }

        let last = self.layers.len() - 1;
        let keep_scale = 1.0 / (1.0 - self.dropout_rate);
        let mut hidden_activations = Vec::with_capacity(last);
        let mut masks: Vec<Vec<bool>> = Vec::new();
        let mut current = x.to_vec();
        let mut logits = Vec::new();

        for (l, layer) in self.layers.iter().enumerate() {
            let mut out = vec![0.0; layer.spec.fan_out];
            for (i, o) in out.iter_mut().enumerate() {
                let row = &layer.weights[i * layer.spec.fan_in..(i + 1) * layer.spec.fan_in];
                let mut acc = layer.biases[i];
                for (w, a) in row.iter().zip(&current) {
                    acc += w * a;
                }
                *o = layer.spec.activation.apply(acc);
            }
            if l < last {
                if let Some(rng) = rng.as_deref_mut() {
                    let mask: Vec<bool> = (0..out.len())
                        .map(|_| rng.random::<f64>() >= self.dropout_rate)
                        .collect();
                    for (v, &keep) in out.iter_mut().zip(&mask) {
                        *v = if keep { *v * keep_scale } else { 0.0 };
                    }
                    masks.push(mask);
                }
                if out.iter().any(|v| !v.is_finite()) {
                    return Err(Error::non_finite(format!("hidden layer {l} activations")));
                }
                hidden_activations.push(out.clone());
                current = out;
            } else {
                if out.iter().any(|v| !v.is_finite()) {
                    return Err(Error::non_finite("logits"));
                }
                logits = out;
            }
        }

        Ok(ForwardTrace {
            input: x.to_vec(),
            logits,
            hidden_activations,
            dropout_masks: if masks.is_empty() { None } else { Some(masks) },
        })
    }
}
