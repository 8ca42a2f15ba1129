//! Reverse-mode gradients for the dense network.
//!
//! Besides the usual logit upstream, `backward` accepts gradient
//! contributions injected directly at hidden-activation taps; the loss
//! estimator consumes those activations, so its gradient must flow back
//! through them into the model parameters. Dropout masks recorded in the
//! trace are reused exactly.

use crate::error::{Error, Result};
use crate::nn::model::{Activation, ForwardTrace, Mlp};

/// Gradients for one layer, shaped like the layer parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerGradients {
    pub d_weights: Vec<f64>,
    pub d_biases: Vec<f64>,
}

/// Gradients for every model parameter, in layer order.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelGradients {
    pub layers: Vec<LayerGradients>,
}

impl ModelGradients {
    pub fn zeros_like(model: &Mlp) -> Self {
        ModelGradients {
            layers: model
                .layers
                .iter()
                .map(|l| LayerGradients {
                    d_weights: vec![0.0; l.weights.len()],
                    d_biases: vec![0.0; l.biases.len()],
                })
                .collect(),
        }
    }

    pub fn add_assign(&mut self, other: &ModelGradients) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            for (x, y) in a.d_weights.iter_mut().zip(&b.d_weights) {
                *x += y;
            }
            for (x, y) in a.d_biases.iter_mut().zip(&b.d_biases) {
                *x += y;
            }
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for layer in &mut self.layers {
            for v in layer.d_weights.iter_mut().chain(layer.d_biases.iter_mut()) {
                *v *= factor;
            }
        }
    }

    /// Flattened in the same order as [`Mlp::params_flat`].
    pub fn flat(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for layer in &self.layers {
            out.extend_from_slice(&layer.d_weights);
            out.extend_from_slice(&layer.d_biases);
        }
        out
    }

    pub(crate) fn blocks(&self) -> Vec<&[f64]> {
        let mut blocks = Vec::with_capacity(self.layers.len() * 2);
        for layer in &self.layers {
            blocks.push(layer.d_weights.as_slice());
            blocks.push(layer.d_biases.as_slice());
        }
        blocks
    }
}

fn validate_trace(model: &Mlp, trace: &ForwardTrace) -> Result<()> {
    let stale = |reason: String| Err(Error::StaleTrace(reason));
    if trace.input.len() != model.num_inputs() {
        return stale(format!(
            "trace input width {} != model input width {}",
            trace.input.len(),
            model.num_inputs()
        ));
    }
    if trace.logits.len() != model.num_classes() {
        return stale(format!(
            "trace logit width {} != model output width {}",
            trace.logits.len(),
            model.num_classes()
        ));
    }
    if trace.hidden_activations.len() != model.num_hidden_layers() {
        return stale(format!(
            "trace has {} hidden layers, model has {}",
            trace.hidden_activations.len(),
            model.num_hidden_layers()
        ));
    }
    for (l, acts) in trace.hidden_activations.iter().enumerate() {
        if acts.len() != model.layers[l].spec.fan_out {
            return stale(format!("hidden layer {l} width mismatch"));
        }
    }
    if let Some(masks) = &trace.dropout_masks {
        if model.dropout_rate() == 0.0 {
            return stale("trace has dropout masks but model has dropout rate 0".into());
        }
        if masks.len() != model.num_hidden_layers() {
            return stale("dropout mask count mismatch".into());
        }
        for (l, mask) in masks.iter().enumerate() {
            if mask.len() != model.layers[l].spec.fan_out {
                return stale(format!("dropout mask {l} width mismatch"));
            }
        }
    }
    Ok(())
}

/// Backpropagate through one recorded forward pass.
///
/// `d_logits` is the loss gradient at the logits. `tap_gradients` lists
/// `(hidden_layer_index, gradient)` contributions added at the stored
/// hidden activations.
pub fn backward(
    model: &Mlp,
    trace: &ForwardTrace,
    d_logits: &[f64],
    tap_gradients: &[(usize, Vec<f64>)],
) -> Result<ModelGradients> {
    validate_trace(model, trace)?;
    if d_logits.len() != model.num_classes() {
        return Err(Error::ShapeMismatch {
            what: "logit gradient",
            expected: model.num_classes(),
            actual: d_logits.len(),
        });
    }
    for &(tap, ref grad) in tap_gradients {
        if tap >= model.num_hidden_layers() {
            return Err(Error::IndexOutOfRange {
                index: tap,
                len: model.num_hidden_layers(),
            });
        }
        if grad.len() != trace.hidden_activations[tap].len() {
            return Err(Error::ShapeMismatch {
                what: "tap gradient",
                expected: trace.hidden_activations[tap].len(),
                actual: grad.len(),
            });
        }
    }

    let mut grads = ModelGradients::zeros_like(model);
    let last = model.layers.len() - 1;
    let keep_scale = 1.0 / (1.0 - model.dropout_rate());

    // delta at the output layer (through its activation)
    let mut delta: Vec<f64> = match model.layers[last].spec.activation {
        Activation::Identity => d_logits.to_vec(),
        Activation::Relu => d_logits
            .iter()
            .zip(&trace.logits)
            .map(|(&g, &out)| if out > 0.0 { g } else { 0.0 })
            .collect(),
    };

    for l in (0..=last).rev() {
        let layer = &model.layers[l];
        let prev: &[f64] = if l == 0 {
            &trace.input
        } else {
            &trace.hidden_activations[l - 1]
        };
        let lg = &mut grads.layers[l];
        for (i, &d) in delta.iter().enumerate() {
            lg.d_biases[i] = d;
            let row = &mut lg.d_weights[i * layer.spec.fan_in..(i + 1) * layer.spec.fan_in];
            for (w, &a) in row.iter_mut().zip(prev) {
                *w = d * a;
            }
        }
        if l == 0 {
            break;
        }

        // gradient w.r.t. the previous (stored, post-dropout) activation
        let mut d_act = vec![0.0; layer.spec.fan_in];
        for (i, &d) in delta.iter().enumerate() {
            let row = &layer.weights[i * layer.spec.fan_in..(i + 1) * layer.spec.fan_in];
            for (da, &w) in d_act.iter_mut().zip(row) {
                *da += w * d;
            }
        }
        let hidden = l - 1;
        for &(tap, ref grad) in tap_gradients {
            if tap == hidden {
                for (da, &g) in d_act.iter_mut().zip(grad) {
                    *da += g;
                }
            }
        }

        // through the dropout mask and the activation of the hidden layer
        let acts = &trace.hidden_activations[hidden];
        let mask = trace.dropout_masks.as_ref().map(|m| &m[hidden]);
        let activation = model.layers[hidden].spec.activation;
        delta = d_act
            .iter()
            .enumerate()
            .map(|(i, &da)| {
                let drop_factor = match mask {
                    Some(m) => {
                        if m[i] {
                            keep_scale
                        } else {
                            0.0
                        }
                    }
                    None => 1.0,
                };
                let act_factor = match activation {
                    Activation::Identity => 1.0,
                    // stored value > 0 iff the pre-activation was > 0
                    // whenever the unit was kept; dropped units are already
                    // zeroed by drop_factor
                    Activation::Relu => {
                        if acts[i] > 0.0 {
                            1.0
                        } else {
                            0.0
                        }
                    }
                };
                da * drop_factor * act_factor
            })
            .collect();
    }

    Ok(grads)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::loss::{cross_entropy, cross_entropy_grad};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_upstream_gives_zero_gradients() {
        let model = Mlp::new(&[3, 5, 4], 0.0, 2).unwrap();
        let trace = model.forward(&[0.1, -0.2, 0.3]).unwrap();
        let grads = backward(&model, &trace, &vec![0.0; 4], &[]).unwrap();
        assert!(grads.flat().iter().all(|&g| g == 0.0));
    }

    #[test]
    fn single_linear_layer_gradient_is_outer_product() {
        // hand oracle: identity layer, d_logits = g, dW[i][j] = g[i] * x[j]
        let mut model = Mlp::from_specs(
            vec![crate::nn::model::LayerSpec {
                fan_in: 2,
                fan_out: 2,
                activation: Activation::Identity,
            }],
            0.0,
            0,
        )
        .unwrap();
        model
            .set_layer(0, vec![0.3, -0.2, 0.5, 0.9], vec![0.1, -0.1])
            .unwrap();
        let x = [2.0, -3.0];
        let g = [0.5, -1.5];
        let trace = model.forward(&x).unwrap();
        let grads = backward(&model, &trace, &g, &[]).unwrap();
        assert_eq!(
            grads.layers[0].d_weights,
            vec![0.5 * 2.0, 0.5 * -3.0, -1.5 * 2.0, -1.5 * -3.0]
        );
        assert_eq!(grads.layers[0].d_biases, vec![0.5, -1.5]);
    }

    #[test]
    fn stale_trace_is_rejected() {
        let model_a = Mlp::new(&[3, 5, 4], 0.0, 2).unwrap();
        let model_b = Mlp::new(&[3, 6, 4], 0.0, 2).unwrap();
        let trace = model_a.forward(&[0.1, -0.2, 0.3]).unwrap();
        let err = backward(&model_b, &trace, &vec![0.0; 4], &[]).unwrap_err();
        assert!(matches!(err, Error::StaleTrace(_)));
    }

    #[test]
    fn tap_gradient_shape_is_checked() {
        let model = Mlp::new(&[2, 4, 3], 0.0, 1).unwrap();
        let trace = model.forward(&[0.5, 0.5]).unwrap();
        let err = backward(&model, &trace, &vec![0.0; 3], &[(0, vec![1.0; 3])]).unwrap_err();
        assert!(matches!(err, Error::ShapeMismatch { .. }));
        let err = backward(&model, &trace, &vec![0.0; 3], &[(1, vec![1.0; 4])]).unwrap_err();
        assert!(matches!(err, Error::IndexOutOfRange { .. }));
    }

    /// Central finite differences over the cross-entropy (plus an optional
    /// linear functional of tapped activations, which exercises the tap
    /// injection path).
    fn finite_difference_check(dims: &[usize], dropout: f64, seed: u64, with_taps: bool) {
        let model = Mlp::new(dims, dropout, seed).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xABCD);
        let x: Vec<f64> = (0..dims[0]).map(|_| rng.random_range(-1.5..1.5)).collect();
        let label = rng.random_range(0..*dims.last().unwrap());
        let tap_weights: Vec<Vec<f64>> = dims[1..dims.len() - 1]
            .iter()
            .map(|&w| (0..w).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        let mask_seed = rng.random::<u64>();

        // loss(params) = cross_entropy + sum over taps of tap_weights . acts
        let eval = |m: &Mlp| -> f64 {
            let trace = if dropout > 0.0 {
                let mut drop_rng = ChaCha8Rng::seed_from_u64(mask_seed);
                m.forward_dropout(&x, &mut drop_rng).unwrap()
            } else {
                m.forward(&x).unwrap()
            };
            let mut loss = cross_entropy(&trace.logits, label).unwrap();
            if with_taps {
                for (tw, acts) in tap_weights.iter().zip(&trace.hidden_activations) {
                    loss += tw.iter().zip(acts).map(|(a, b)| a * b).sum::<f64>();
                }
            }
            loss
        };

        let trace = if dropout > 0.0 {
            let mut drop_rng = ChaCha8Rng::seed_from_u64(mask_seed);
            model.forward_dropout(&x, &mut drop_rng).unwrap()
        } else {
            model.forward(&x).unwrap()
        };
        let d_logits = cross_entropy_grad(&trace.logits, label).unwrap();
        let taps: Vec<(usize, Vec<f64>)> = if with_taps {
            tap_weights
                .iter()
                .enumerate()
                .map(|(i, w)| (i, w.clone()))
                .collect()
        } else {
            Vec::new()
        };
        let analytic = backward(&model, &trace, &d_logits, &taps).unwrap().flat();

        let report = crate::gradcheck::check_gradients(
            |p| {
                let mut scratch = model.clone();
                scratch.set_params_flat(p).unwrap();
                eval(&scratch)
            },
            &model.params_flat(),
            &analytic,
            1e-4,
            1e-4,
            1e-8,
        )
        .unwrap();
        // the vast majority of parameters must actually be checked; kink
        // skips are rare
        assert!(report.checked > 0 && report.skipped < report.checked / 4);
    }

    #[test]
    fn gradients_match_finite_differences() {
        finite_difference_check(&[4, 8, 3], 0.0, 10, false);
        finite_difference_check(&[3, 6, 5, 2], 0.0, 11, false);
        finite_difference_check(&[5, 4, 4], 0.0, 12, true);
    }

    #[test]
    fn gradients_match_finite_differences_with_dropout_masks_replayed() {
        finite_difference_check(&[4, 8, 3], 0.4, 13, false);
        finite_difference_check(&[3, 6, 5, 2], 0.25, 14, true);
    }

    #[test]
    fn backward_is_bitwise_deterministic() {
        let model = Mlp::new(&[4, 6, 3], 0.0, 7).unwrap();
        let x = [0.4, -0.1, 0.9, 2.0];
        let t1 = model.forward(&x).unwrap();
        let t2 = model.forward(&x).unwrap();
        let g = cross_entropy_grad(&t1.logits, 1).unwrap();
        let g1 = backward(&model, &t1, &g, &[]).unwrap();
        let g2 = backward(&model, &t2, &g, &[]).unwrap();
        assert_eq!(g1, g2);
    }
}
