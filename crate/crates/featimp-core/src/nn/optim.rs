//! Adam optimizer over flat parameter blocks.

use crate::error::{Error, Result};
use crate::estimator::network::{EstimatorGradients, LossEstimator};
use crate::nn::backward::ModelGradients;
use crate::nn::model::Mlp;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 0.001,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        AdamConfig {
            lr,
            ..AdamConfig::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
struct MomentBlock {
    m: Vec<f64>,
    v: Vec<f64>,
}

/// Adam state for one parameter set (a model or an estimator). Holds first
/// and second moment estimates per parameter plus the shared step count.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub config: AdamConfig,
    step: u64,
    blocks: Vec<MomentBlock>,
}

impl Adam {
    fn new(config: AdamConfig, block_sizes: impl IntoIterator<Item = usize>) -> Self {
        Adam {
            config,
            step: 0,
            blocks: block_sizes
                .into_iter()
                .map(|n| MomentBlock {
                    m: vec![0.0; n],
                    v: vec![0.0; n],
                })
                .collect(),
        }
    }

    pub fn for_model(model: &Mlp, config: AdamConfig) -> Self {
        let sizes: Vec<usize> = model
            .layer_specs()
            .iter()
            .flat_map(|s| [s.fan_in * s.fan_out, s.fan_out])
            .collect();
        Adam::new(config, sizes)
    }

    pub fn for_estimator(estimator: &LossEstimator, config: AdamConfig) -> Self {
        Adam::new(config, estimator.block_sizes())
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// One Adam update of the model parameters. Errors (before touching any
    /// parameter) if a gradient is non-finite, naming the offending layer.
    pub fn step_model(&mut self, model: &mut Mlp, grads: &ModelGradients) -> Result<()> {
        let blocks = grads.blocks();
        for (b, block) in blocks.iter().enumerate() {
            if block.iter().any(|g| !g.is_finite()) {
                let layer = b / 2;
                let kind = if b % 2 == 0 { "weights" } else { "biases" };
                return Err(Error::non_finite(format!(
                    "gradient for model layer {layer} {kind}"
                )));
            }
        }
        self.apply(model.param_blocks_mut(), &blocks);
        model.check_finite()
    }

    /// One Adam update of the estimator parameters.
    pub fn step_estimator(
        &mut self,
        estimator: &mut LossEstimator,
        grads: &EstimatorGradients,
    ) -> Result<()> {
        let blocks = grads.blocks();
        for (b, block) in blocks.iter().enumerate() {
            if block.iter().any(|g| !g.is_finite()) {
                return Err(Error::non_finite(format!(
                    "gradient for estimator block {b}"
                )));
            }
        }
        self.apply(estimator.param_blocks_mut(), &blocks);
        estimator.check_finite()
    }

    fn apply(&mut self, mut params: Vec<&mut [f64]>, grads: &[&[f64]]) {
        assert_eq!(params.len(), self.blocks.len(), "optimizer/parameter shape drift");
        assert_eq!(grads.len(), self.blocks.len(), "optimizer/gradient shape drift");
        self.step += 1;
        let t = self.step as i32;
        let AdamConfig {
            lr,
            beta1,
            beta2,
            eps,
        } = self.config;
        let bc1 = 1.0 - beta1.powi(t);
        let bc2 = 1.0 - beta2.powi(t);
        for ((block, moments), grad) in params.iter_mut().zip(&mut self.blocks).zip(grads) {
            for i in 0..block.len() {
                let g = grad[i];
                moments.m[i] = beta1 * moments.m[i] + (1.0 - beta1) * g;
                moments.v[i] = beta2 * moments.v[i] + (1.0 - beta2) * g * g;
                let m_hat = moments.m[i] / bc1;
                let v_hat = moments.v[i] / bc2;
                block[i] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
    }
}
