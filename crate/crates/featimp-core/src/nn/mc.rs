//! Monte Carlo dropout prediction intervals.

use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::nn::loss::cross_entropy;
use crate::nn::model::{ForwardTrace, Mlp};

/// Mean and spread of the per-pass losses from `passes` dropout-active
/// forward passes, plus the per-layer activations averaged across passes.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionInterval {
    /// Mean of the per-pass cross-entropy values.
    pub loss_mean: f64,
    /// Population standard deviation of the per-pass cross-entropy values.
    pub loss_std: f64,
    /// Number of passes.
    pub passes: usize,
    /// Per hidden layer, elementwise mean activation across passes.
    pub mean_activations: Vec<Vec<f64>>,
}

impl PredictionInterval {
    pub fn lower(&self) -> f64 {
        self.loss_mean - self.loss_std
    }

    pub fn upper(&self) -> f64 {
        self.loss_mean + self.loss_std
    }
}

pub(crate) struct McPasses {
    pub traces: Vec<ForwardTrace>,
    pub losses: Vec<f64>,
    pub interval: PredictionInterval,
}

/// Run `passes` dropout-active forward passes and collect the traces.
/// With dropout rate 0 every pass is identical, so a single pass is run and
/// the interval collapses exactly (std 0, mean activations equal to the one
/// pass).
pub(crate) fn mc_dropout_passes(
    model: &Mlp,
    x: &[f64],
    label: usize,
    passes: usize,
    rng: &mut ChaCha8Rng,
) -> Result<McPasses> {
    if passes < 1 {
        return Err(Error::invalid_argument("mc passes must be >= 1"));
    }
    if label >= model.num_classes() {
        return Err(Error::InvalidLabel {
            label,
            num_classes: model.num_classes(),
        });
    }

    if model.dropout_rate() == 0.0 {
        let trace = model.forward(x)?;
        let loss = cross_entropy(&trace.logits, label)?;
        let interval = PredictionInterval {
            loss_mean: loss,
            loss_std: 0.0,
            passes,
            mean_activations: trace.hidden_activations.clone(),
        };
        return Ok(McPasses {
            traces: vec![trace],
            losses: vec![loss],
            interval,
        });
    }

    let mut traces = Vec::with_capacity(passes);
    let mut losses = Vec::with_capacity(passes);
    for _ in 0..passes {
        let trace = model.forward_dropout(x, rng)?;
        losses.push(cross_entropy(&trace.logits, label)?);
        traces.push(trace);
    }

    let mean = crate::stats::mean(&losses);
    let std = if passes == 1 {
        0.0
    } else {
        crate::stats::population_std(&losses)
    };

    let mut mean_activations: Vec<Vec<f64>> = traces[0]
        .hidden_activations
        .iter()
        .map(|a| vec![0.0; a.len()])
        .collect();
    for trace in &traces {
        for (acc, acts) in mean_activations.iter_mut().zip(&trace.hidden_activations) {
            for (s, &v) in acc.iter_mut().zip(acts) {
                *s += v;
            }
        }
    }
    let inv = 1.0 / passes as f64;
    for layer in &mut mean_activations {
        for v in layer.iter_mut() {
            *v *= inv;
        }
    }

    Ok(McPasses {
        traces,
        losses,
        interval: PredictionInterval {
            loss_mean: mean,
            loss_std: std,
            passes,
            mean_activations,
        },
    })
}

/// Monte Carlo dropout loss interval for one labelled sample.
pub fn mc_dropout_interval(
    model: &Mlp,
    x: &[f64],
    label: usize,
    passes: usize,
    rng: &mut ChaCha8Rng,
) -> Result<PredictionInterval> {
    Ok(mc_dropout_passes(model, x, label, passes, rng)?.interval)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn zero_dropout_collapses_interval_exactly() {
        let model = Mlp::new(&[3, 5, 4], 0.0, 2).unwrap();
        let x = [0.5, -1.0, 2.0];
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let interval = mc_dropout_interval(&model, &x, 1, 7, &mut rng).unwrap();
        assert_eq!(interval.loss_std, 0.0);
        let single = model.forward(&x).unwrap();
        assert_eq!(
            interval.loss_mean,
            cross_entropy(&single.logits, 1).unwrap()
        );
        assert_eq!(interval.mean_activations, single.hidden_activations);
    }

    #[test]
    fn single_pass_has_zero_std() {
        let model = Mlp::new(&[3, 5, 4], 0.5, 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let interval = mc_dropout_interval(&model, &[1.0, 1.0, 1.0], 0, 1, &mut rng).unwrap();
        assert_eq!(interval.loss_std, 0.0);
        assert_eq!(interval.passes, 1);
    }

    #[test]
    fn zero_passes_is_an_error() {
        let model = Mlp::new(&[2, 3, 2], 0.1, 0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(mc_dropout_interval(&model, &[0.0, 0.0], 0, 0, &mut rng).is_err());
    }

    /// Independent oracle: rerun the same seeded mask sequence, recompute
    /// each pass with straight-line matrix code replaying the recorded
    /// masks, and compare the moments.
    #[test]
    fn moments_match_mask_replay_oracle() {
        let model = Mlp::new(&[4, 6, 5, 3], 0.5, 21).unwrap();
        let x = [0.3, -0.8, 1.4, 0.2];
        let label = 2;
        let passes = 100;

        let mut rng = ChaCha8Rng::seed_from_u64(555);
        let interval = mc_dropout_interval(&model, &x, label, passes, &mut rng).unwrap();

        // replay the identical rng stream to capture the traces
        let mut rng2 = ChaCha8Rng::seed_from_u64(555);
        let mut oracle_losses = Vec::new();
        for _ in 0..passes {
            let trace = model.forward_dropout(&x, &mut rng2).unwrap();
            let masks = trace.dropout_masks.as_ref().unwrap();
            // straight-line recompute applying the recorded masks
            let mut a: Vec<f64> = x.to_vec();
            for l in 0..model.num_layers() {
                let (fan_in, fan_out) = {
                    let s = model.layer_specs()[l];
                    (s.fan_in, s.fan_out)
                };
                let w = model.layer_weights(l);
                let b = model.layer_biases(l);
                let mut z = vec![0.0; fan_out];
                for i in 0..fan_out {
                    let mut acc = b[i];
                    for j in 0..fan_in {
                        acc += w[i * fan_in + j] * a[j];
                    }
                    z[i] = acc;
                }
                if l < model.num_layers() - 1 {
                    for v in z.iter_mut() {
                        *v = v.max(0.0);
                    }
                    for (i, v) in z.iter_mut().enumerate() {
                        *v = if masks[l][i] { *v / 0.5 } else { 0.0 };
                    }
                }
                a = z;
            }
            let max = a.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + a.iter().map(|&v| (v - max).exp()).sum::<f64>().ln();
            oracle_losses.push(lse - a[label]);
        }
        let mu = oracle_losses.iter().sum::<f64>() / passes as f64;
        let var = oracle_losses.iter().map(|l| (l - mu) * (l - mu)).sum::<f64>() / passes as f64;
        assert!((interval.loss_mean - mu).abs() < 1e-12);
        assert!((interval.loss_std - var.sqrt()).abs() < 1e-12);
        assert!(interval.loss_std > 0.0);
    }
}
