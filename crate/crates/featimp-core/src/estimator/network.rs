//! The auxiliary loss estimator.
//!
//! Reads hidden activations of the predictive model at a set of taps, pushes
//! each tap through its own linear + ReLU projection, concatenates, and maps
//! the result to a scalar loss estimate.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::nn::backward::LayerGradients;
use crate::nn::model::{ForwardTrace, Mlp};

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Projection {
    /// Row-major `hidden_units x tap_dim`.
    pub(crate) weights: Vec<f64>,
    pub(crate) biases: Vec<f64>,
}

/// Auxiliary network producing a scalar loss estimate from tapped hidden
/// activations of a bound [`Mlp`].
#[derive(Debug, Clone, PartialEq)]
pub struct LossEstimator {
    taps: Vec<usize>,
    tap_dims: Vec<usize>,
    hidden_units: usize,
    projections: Vec<Projection>,
    head_weights: Vec<f64>,
    head_bias: f64,
    seed: u64,
}

/// Intermediate values of one estimator forward pass, kept for backward.
#[derive(Debug, Clone)]
pub struct EstimatorTrace {
    tap_inputs: Vec<Vec<f64>>,
    pre_relu: Vec<Vec<f64>>,
}

/// Gradients for every estimator parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorGradients {
    pub projections: Vec<LayerGradients>,
    pub d_head_weights: Vec<f64>,
    pub d_head_bias: f64,
}

impl EstimatorGradients {
    pub fn zeros_like(estimator: &LossEstimator) -> Self {
        EstimatorGradients {
            projections: estimator
                .projections
                .iter()
                .map(|p| LayerGradients {
                    d_weights: vec![0.0; p.weights.len()],
                    d_biases: vec![0.0; p.biases.len()],
                })
                .collect(),
            d_head_weights: vec![0.0; estimator.head_weights.len()],
            d_head_bias: 0.0,
        }
    }

    pub fn add_assign(&mut self, other: &EstimatorGradients) {
        for (a, b) in self.projections.iter_mut().zip(&other.projections) {
            for (x, y) in a.d_weights.iter_mut().zip(&b.d_weights) {
                *x += y;
            }
            for (x, y) in a.d_biases.iter_mut().zip(&b.d_biases) {
                *x += y;
            }
        }
        for (x, y) in self.d_head_weights.iter_mut().zip(&other.d_head_weights) {
            *x += y;
        }
        self.d_head_bias += other.d_head_bias;
    }

    pub fn scale(&mut self, factor: f64) {
        for p in &mut self.projections {
            for v in p.d_weights.iter_mut().chain(p.d_biases.iter_mut()) {
                *v *= factor;
            }
        }
        for v in &mut self.d_head_weights {
            *v *= factor;
        }
        self.d_head_bias *= factor;
    }

    pub fn flat(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for p in &self.projections {
            out.extend_from_slice(&p.d_weights);
            out.extend_from_slice(&p.d_biases);
        }
        out.extend_from_slice(&self.d_head_weights);
        out.push(self.d_head_bias);
        out
    }

    pub(crate) fn blocks(&self) -> Vec<&[f64]> {
        let mut blocks = Vec::new();
        for p in &self.projections {
            blocks.push(p.d_weights.as_slice());
            blocks.push(p.d_biases.as_slice());
        }
        blocks.push(self.d_head_weights.as_slice());
        blocks.push(std::slice::from_ref(&self.d_head_bias));
        blocks
    }
}

pub const DEFAULT_ESTIMATOR_UNITS: usize = 16;

impl LossEstimator {
    /// Build an estimator bound to `model`, reading the given hidden-layer
    /// taps with `hidden_units` per projection.
    pub fn new(model: &Mlp, taps: Vec<usize>, hidden_units: usize, seed: u64) -> Result<Self> {
        if taps.is_empty() {
            return Err(Error::invalid_argument("estimator needs at least one tap"));
        }
        if hidden_units == 0 {
            return Err(Error::invalid_argument("estimator units must be positive"));
        }
        let hidden_widths = model.hidden_widths();
        for pair in taps.windows(2) {
            if pair[0] >= pair[1] {
                return Err(Error::invalid_argument(
                    "taps must be strictly increasing hidden-layer indices",
                ));
            }
        }
        let mut tap_dims = Vec::with_capacity(taps.len());
        for &tap in &taps {
            match hidden_widths.get(tap) {
                Some(&w) => tap_dims.push(w),
                None => {
                    return Err(Error::IndexOutOfRange {
                        index: tap,
                        len: hidden_widths.len(),
                    })
                }
            }
        }

        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let projections = tap_dims
            .iter()
            .map(|&dim| {
                let limit = (6.0 / dim as f64).sqrt();
                Projection {
                    weights: (0..hidden_units * dim)
                        .map(|_| rng.random_range(-limit..limit))
                        .collect(),
                    biases: vec![0.0; hidden_units],
                }
            })
            .collect();
        let head_in = taps.len() * hidden_units;
        let limit = (6.0 / head_in as f64).sqrt();
        let head_weights = (0..head_in).map(|_| rng.random_range(-limit..limit)).collect();

        Ok(LossEstimator {
            taps,
            tap_dims,
            hidden_units,
            projections,
            head_weights,
            head_bias: 0.0,
            seed,
        })
    }

    /// Default estimator: one tap per hidden layer of `model`, 16 units per
    /// projection.
    pub fn for_model(model: &Mlp, seed: u64) -> Result<Self> {
        let taps: Vec<usize> = (0..model.num_hidden_layers()).collect();
        LossEstimator::new(model, taps, DEFAULT_ESTIMATOR_UNITS, seed)
    }

    pub fn taps(&self) -> &[usize] {
        &self.taps
    }

    pub fn tap_dims(&self) -> &[usize] {
        &self.tap_dims
    }

    pub fn hidden_units(&self) -> usize {
        self.hidden_units
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Check that this estimator's taps are compatible with `model`.
    pub fn compatible_with(&self, model: &Mlp) -> bool {
        let widths = model.hidden_widths();
        self.taps
            .iter()
            .zip(&self.tap_dims)
            .all(|(&tap, &dim)| widths.get(tap) == Some(&dim))
    }

    /// Scalar loss estimate from one per-tap activation slice each.
    pub fn estimate(&self, tap_activations: &[&[f64]]) -> Result<f64> {
        Ok(self.forward_with_trace(tap_activations)?.0)
    }

    /// Loss estimate from a recorded forward trace of the bound model,
    /// selecting this estimator's taps.
    pub fn estimate_from_trace(&self, trace: &ForwardTrace) -> Result<f64> {
        let acts = self.select_taps(&trace.hidden_activations)?;
        self.estimate(&acts)
    }

    /// Loss estimate from per-hidden-layer activations (e.g. the mean
    /// activations of a dropout interval), selecting this estimator's taps.
    pub fn estimate_from_hidden(&self, hidden_activations: &[Vec<f64>]) -> Result<f64> {
        let acts = self.select_taps(hidden_activations)?;
        self.estimate(&acts)
    }

    pub(crate) fn select_taps<'a>(&self, hidden: &'a [Vec<f64>]) -> Result<Vec<&'a [f64]>> {
        self.taps
            .iter()
            .map(|&tap| {
                hidden.get(tap).map(|v| v.as_slice()).ok_or(Error::IndexOutOfRange {
                    index: tap,
                    len: hidden.len(),
                })
            })
            .collect()
    }

    /// Forward pass keeping intermediates for [`LossEstimator::backward`].
    pub fn forward_with_trace(&self, tap_activations: &[&[f64]]) -> Result<(f64, EstimatorTrace)> {
        if tap_activations.len() != self.taps.len() {
            return Err(Error::ShapeMismatch {
                what: "tap activations",
                expected: self.taps.len(),
                actual: tap_activations.len(),
            });
        }
        for (acts, &dim) in tap_activations.iter().zip(&self.tap_dims) {
            if acts.len() != dim {
                return Err(Error::ShapeMismatch {
                    what: "tap activation width",
                    expected: dim,
                    actual: acts.len(),
                });
            }
        }

        let mut pre_relu = Vec::with_capacity(self.taps.len());
        let mut estimate = self.head_bias;
        for (t, (proj, acts)) in self.projections.iter().zip(tap_activations).enumerate() {
            let dim = self.tap_dims[t];
            let mut u = vec![0.0; self.hidden_units];
            for (i, ui) in u.iter_mut().enumerate() {
                let row = &proj.weights[i * dim..(i + 1) * dim];
                let mut acc = proj.biases[i];
                for (w, a) in row.iter().zip(*acts) {
                    acc += w * a;
                }
                *ui = acc;
            }
            let offset = t * self.hidden_units;
            for (i, &ui) in u.iter().enumerate() {
                estimate += self.head_weights[offset + i] * ui.max(0.0);
            }
            pre_relu.push(u);
        }
        if !estimate.is_finite() {
            return Err(Error::non_finite("loss estimate"));
        }
        Ok((
            estimate,
            EstimatorTrace {
                tap_inputs: tap_activations.iter().map(|a| a.to_vec()).collect(),
                pre_relu,
            },
        ))
    }

    /// Backpropagate `d_estimate` (the loss gradient at the scalar output)
    /// through the estimator. Returns the parameter gradients and the
    /// gradients with respect to each tapped activation, tagged with the tap's
    /// hidden-layer index so they can be injected into [`crate::nn::backward`].
    pub fn backward(
        &self,
        trace: &EstimatorTrace,
        d_estimate: f64,
    ) -> (EstimatorGradients, Vec<(usize, Vec<f64>)>) {
        let mut grads = EstimatorGradients::zeros_like(self);
        grads.d_head_bias = d_estimate;
        let mut tap_grads = Vec::with_capacity(self.taps.len());
        for (t, proj) in self.projections.iter().enumerate() {
            let dim = self.tap_dims[t];
            let offset = t * self.hidden_units;
            let u = &trace.pre_relu[t];
            let inputs = &trace.tap_inputs[t];
            let mut d_act = vec![0.0; dim];
            let pg = &mut grads.projections[t];
            for i in 0..self.hidden_units {
                let r = u[i].max(0.0);
                grads.d_head_weights[offset + i] = d_estimate * r;
                let du = if u[i] > 0.0 {
                    d_estimate * self.head_weights[offset + i]
                } else {
                    0.0
                };
                pg.d_biases[i] = du;
                for j in 0..dim {
                    pg.d_weights[i * dim + j] = du * inputs[j];
                    d_act[j] += du * proj.weights[i * dim + j];
                }
            }
            tap_grads.push((self.taps[t], d_act));
        }
        (grads, tap_grads)
    }

    pub fn param_count(&self) -> usize {
        self.projections
            .iter()
            .map(|p| p.weights.len() + p.biases.len())
            .sum::<usize>()
            + self.head_weights.len()
            + 1
    }

    pub fn params_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for p in &self.projections {
            out.extend_from_slice(&p.weights);
            out.extend_from_slice(&p.biases);
        }
        out.extend_from_slice(&self.head_weights);
        out.push(self.head_bias);
        out
    }

    pub fn set_params_flat(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.param_count() {
            return Err(Error::ShapeMismatch {
                what: "flat estimator parameters",
                expected: self.param_count(),
                actual: params.len(),
            });
        }
        let mut offset = 0;
        for p in &mut self.projections {
            let w = p.weights.len();
            p.weights.copy_from_slice(&params[offset..offset + w]);
            offset += w;
            let b = p.biases.len();
            p.biases.copy_from_slice(&params[offset..offset + b]);
            offset += b;
        }
        let h = self.head_weights.len();
        self.head_weights.copy_from_slice(&params[offset..offset + h]);
        offset += h;
        self.head_bias = params[offset];
        Ok(())
    }

    pub(crate) fn block_sizes(&self) -> Vec<usize> {
        let mut sizes = Vec::new();
        for p in &self.projections {
            sizes.push(p.weights.len());
            sizes.push(p.biases.len());
        }
        sizes.push(self.head_weights.len());
        sizes.push(1);
        sizes
    }

    pub(crate) fn param_blocks_mut(&mut self) -> Vec<&mut [f64]> {
        let mut blocks = Vec::new();
        for p in &mut self.projections {
            blocks.push(p.weights.as_mut_slice());
            blocks.push(p.biases.as_mut_slice());
        }
        blocks.push(self.head_weights.as_mut_slice());
        blocks.push(std::slice::from_mut(&mut self.head_bias));
        blocks
    }

    pub fn check_finite(&self) -> Result<()> {
        if self.params_flat().iter().any(|v| !v.is_finite()) {
            return Err(Error::non_finite("estimator parameters"));
        }
        Ok(())
    }
}
