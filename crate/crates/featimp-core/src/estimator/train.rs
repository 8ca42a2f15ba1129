//! Joint training of the predictive model and its loss estimator.
//!
//! Every step minimizes `total = main + aux_weight * aux`, where `main` is
//! the mean cross-entropy of the batch and `aux` is the contrastive or
//! dropout-calibration objective over the loss estimates. Gradients of the
//! auxiliary loss flow through the activation taps back into the model
//! parameters; the targets captured from the batch (true losses, interval
//! endpoints) are constants and receive no gradient.

use rand::seq::SliceRandom;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::{holdout_split, Dataset};
use crate::error::{Error, Result};
use crate::estimator::network::{EstimatorGradients, LossEstimator};
use crate::estimator::objectives::{
    calibration_grad, calibration_terms, contrastive_pair_grad, IndicatorMode, LossPair,
};
use crate::nn::backward::{backward, ModelGradients};
use crate::nn::loss::{cross_entropy, cross_entropy_grad};
use crate::nn::mc::{mc_dropout_passes, McPasses};
use crate::nn::model::{ForwardTrace, Mlp};
use crate::nn::optim::{Adam, AdamConfig};
use crate::seeds::{derive, Stream};
use crate::stats::spearman;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    Contrastive,
    DropoutCalibration,
}

/// Configuration for [`joint_train`].
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct JointTrainConfig {
    pub objective: Objective,
    /// Ranking margin of the contrastive hinge.
    pub margin: f64,
    /// Interval margin of the calibration hinge.
    pub calibration_margin: f64,
    /// Weight of the auxiliary loss in the total loss. Zero disables the
    /// auxiliary path entirely (the estimator receives no updates).
    pub aux_weight: f64,
    /// Dropout passes per sample in calibration mode.
    pub mc_passes: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    /// Fraction of the dataset held out for the per-epoch rank-correlation
    /// metric; the held-out rows are never trained on.
    pub val_fraction: f64,
    pub indicator: IndicatorMode,
}

impl JointTrainConfig {
    pub fn contrastive(epochs: usize, seed: u64) -> Self {
        JointTrainConfig {
            objective: Objective::Contrastive,
            margin: 1.0,
            calibration_margin: 0.0,
            aux_weight: 1.0,
            mc_passes: 10,
            lr: 0.001,
            batch_size: 128,
            epochs,
            seed,
            val_fraction: 0.1,
            indicator: IndicatorMode::Signed,
        }
    }

    pub fn dropout_calibration(epochs: usize, seed: u64) -> Self {
        JointTrainConfig {
            objective: Objective::DropoutCalibration,
            ..JointTrainConfig::contrastive(epochs, seed)
        }
    }

    fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::invalid_argument("batch size must be positive"));
        }
        if self.objective == Objective::Contrastive && self.batch_size % 2 != 0 {
            return Err(Error::invalid_argument(
                "contrastive training needs an even batch size for pairing",
            ));
        }
        if self.mc_passes < 1 {
            return Err(Error::invalid_argument("mc passes must be >= 1"));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::invalid_argument("learning rate must be positive"));
        }
        if !(self.aux_weight >= 0.0 && self.aux_weight.is_finite()) {
            return Err(Error::invalid_argument("aux weight must be >= 0"));
        }
        if !(self.margin >= 0.0 && self.calibration_margin >= 0.0) {
            return Err(Error::invalid_argument("margins must be >= 0"));
        }
        if !(0.0..1.0).contains(&self.val_fraction) {
            return Err(Error::invalid_argument("val fraction must be in [0, 1)"));
        }
        Ok(())
    }
}

/// Constants captured from one minibatch before any gradient flows. Targets
/// live here precisely because they are never differentiated.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchTargets {
    pub labels: Vec<usize>,
    /// Contrastive mode: true loss per sample (only its ordering matters).
    pub true_losses: Vec<f64>,
    /// Contrastive mode: disjoint index pairs within the batch.
    pub pairs: Vec<(usize, usize)>,
    /// Calibration mode: `(loss_mean, loss_std)` per sample.
    pub intervals: Vec<(f64, f64)>,
    /// Calibration mode: seed of the dropout mask stream, so the same
    /// passes can be replayed exactly.
    pub mask_seed: u64,
}

/// Loss values of one batch under frozen targets.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BatchEval {
    pub main_loss: f64,
    pub aux_loss: f64,
    pub total: f64,
}

/// Capture the loss targets for one batch. In contrastive mode this runs a
/// dropout-inactive forward per sample and records the true losses plus the
/// pairing; in calibration mode it runs the dropout passes seeded by
/// `mask_seed` and records each sample's interval.
pub fn capture_targets(
    model: &Mlp,
    inputs: &[&[f64]],
    labels: &[usize],
    config: &JointTrainConfig,
    mask_seed: u64,
) -> Result<BatchTargets> {
    if inputs.len() != labels.len() {
        return Err(Error::ShapeMismatch {
            what: "batch labels",
            expected: inputs.len(),
            actual: labels.len(),
        });
    }
    match config.objective {
        Objective::Contrastive => {
            let mut true_losses = Vec::with_capacity(inputs.len());
            for (&x, &label) in inputs.iter().zip(labels) {
                let trace = model.forward(x)?;
                true_losses.push(cross_entropy(&trace.logits, label)?);
            }
            Ok(BatchTargets {
                labels: labels.to_vec(),
                pairs: consecutive_pairs(inputs.len()),
                true_losses,
                intervals: Vec::new(),
                mask_seed,
            })
        }
        Objective::DropoutCalibration => {
            let passes = run_passes(model, inputs, labels, config.mc_passes, mask_seed)?;
            Ok(BatchTargets {
                labels: labels.to_vec(),
                true_losses: Vec::new(),
                pairs: Vec::new(),
                intervals: passes
                    .iter()
                    .map(|p| (p.interval.loss_mean, p.interval.loss_std))
                    .collect(),
                mask_seed,
            })
        }
    }
}

fn consecutive_pairs(n: usize) -> Vec<(usize, usize)> {
    (0..n / 2).map(|k| (2 * k, 2 * k + 1)).collect()
}

fn run_passes(
    model: &Mlp,
    inputs: &[&[f64]],
    labels: &[usize],
    mc_passes: usize,
    mask_seed: u64,
) -> Result<Vec<McPasses>> {
    let mut rng = ChaCha8Rng::seed_from_u64(mask_seed);
    inputs
        .iter()
        .zip(labels)
        .map(|(&x, &label)| mc_dropout_passes(model, x, label, mc_passes, &mut rng))
        .collect()
}

/// Losses of one batch against frozen targets (no gradients).
pub fn evaluate_batch(
    model: &Mlp,
    estimator: &LossEstimator,
    inputs: &[&[f64]],
    targets: &BatchTargets,
    config: &JointTrainConfig,
) -> Result<BatchEval> {
    Ok(run_batch(model, estimator, inputs, targets, config, false)?.0)
}

/// Losses and parameter gradients of one batch against frozen targets.
pub fn batch_gradients(
    model: &Mlp,
    estimator: &LossEstimator,
    inputs: &[&[f64]],
    targets: &BatchTargets,
    config: &JointTrainConfig,
) -> Result<(BatchEval, ModelGradients, EstimatorGradients)> {
    let (eval, grads) = run_batch(model, estimator, inputs, targets, config, true)?;
    let (mg, eg) = grads.expect("gradients requested");
    Ok((eval, mg, eg))
}

fn run_batch(
    model: &Mlp,
    estimator: &LossEstimator,
    inputs: &[&[f64]],
    targets: &BatchTargets,
    config: &JointTrainConfig,
    want_grads: bool,
) -> Result<(BatchEval, Option<(ModelGradients, EstimatorGradients)>)> {
    if inputs.is_empty() {
        return Err(Error::invalid_argument("empty batch"));
    }
    if targets.labels.len() != inputs.len() {
        return Err(Error::ShapeMismatch {
            what: "target labels",
            expected: inputs.len(),
            actual: targets.labels.len(),
        });
    }
    match config.objective {
        Objective::Contrastive => {
            let traces: Vec<ForwardTrace> = inputs
                .iter()
                .map(|&x| model.forward(x))
                .collect::<Result<_>>()?;
            contrastive_batch(model, estimator, &traces, targets, config, want_grads)
        }
        Objective::DropoutCalibration => {
            let passes = run_passes(
                model,
                inputs,
                &targets.labels,
                config.mc_passes,
                targets.mask_seed,
            )?;
            calibration_batch(model, estimator, &passes, targets, config, want_grads)
        }
    }
}

fn contrastive_batch(
    model: &Mlp,
    estimator: &LossEstimator,
    traces: &[ForwardTrace],
    targets: &BatchTargets,
    config: &JointTrainConfig,
    want_grads: bool,
) -> Result<(BatchEval, Option<(ModelGradients, EstimatorGradients)>)> {
    let n = traces.len();
    let inv_n = 1.0 / n as f64;

    let mut estimates = Vec::with_capacity(n);
    let mut est_traces = Vec::with_capacity(n);
    let mut main = 0.0;
    for (trace, &label) in traces.iter().zip(&targets.labels) {
        main += cross_entropy(&trace.logits, label)? * inv_n;
        let acts = estimator.select_taps(&trace.hidden_activations)?;
        let (estimate, etrace) = estimator.forward_with_trace(&acts)?;
        estimates.push(estimate);
        est_traces.push(etrace);
    }

    let mut aux = 0.0;
    let mut d_estimates = vec![0.0; n];
    if !targets.pairs.is_empty() && config.aux_weight > 0.0 {
        let inv_pairs = 1.0 / targets.pairs.len() as f64;
        for &(i, j) in &targets.pairs {
            let pair = LossPair {
                true_i: targets.true_losses[i],
                true_j: targets.true_losses[j],
                est_i: estimates[i],
                est_j: estimates[j],
            };
            aux += crate::estimator::objectives::contrastive_loss(
                std::slice::from_ref(&pair),
                config.margin,
                config.indicator,
            )? * inv_pairs;
            let (gi, gj) = contrastive_pair_grad(&pair, config.margin, config.indicator);
            d_estimates[i] += gi * inv_pairs;
            d_estimates[j] += gj * inv_pairs;
        }
    }

    let total = main + config.aux_weight * aux;
    if !total.is_finite() {
        return Err(Error::non_finite("batch loss"));
    }
    let eval = BatchEval {
        main_loss: main,
        aux_loss: aux,
        total,
    };
    if !want_grads {
        return Ok((eval, None));
    }

    let mut model_grads = ModelGradients::zeros_like(model);
    let mut est_grads = EstimatorGradients::zeros_like(estimator);
    for (k, trace) in traces.iter().enumerate() {
        let mut d_logits = cross_entropy_grad(&trace.logits, targets.labels[k])?;
        for g in &mut d_logits {
            *g *= inv_n;
        }
        let d_est = config.aux_weight * d_estimates[k];
        let taps = if d_est != 0.0 {
            let (eg, taps) = estimator.backward(&est_traces[k], d_est);
            est_grads.add_assign(&eg);
            taps
        } else {
            Vec::new()
        };
        model_grads.add_assign(&backward(model, trace, &d_logits, &taps)?);
    }
    Ok((eval, Some((model_grads, est_grads))))
}

fn calibration_batch(
    model: &Mlp,
    estimator: &LossEstimator,
    passes: &[McPasses],
    targets: &BatchTargets,
    config: &JointTrainConfig,
    want_grads: bool,
) -> Result<(BatchEval, Option<(ModelGradients, EstimatorGradients)>)> {
    let n = passes.len();
    if targets.intervals.len() != n {
        return Err(Error::ShapeMismatch {
            what: "target intervals",
            expected: n,
            actual: targets.intervals.len(),
        });
    }
    let inv_n = 1.0 / n as f64;

    let mut main = 0.0;
    let mut aux = 0.0;
    let mut estimates = Vec::with_capacity(n);
    let mut est_traces = Vec::with_capacity(n);
    for (sample, &(mean, std)) in passes.iter().zip(&targets.intervals) {
        main += crate::stats::mean(&sample.losses) * inv_n;
        let acts = estimator.select_taps(&sample.interval.mean_activations)?;
        let (estimate, etrace) = estimator.forward_with_trace(&acts)?;
        aux += calibration_terms(estimate, mean - std, mean + std, config.calibration_margin)
            * inv_n;
        estimates.push(estimate);
        est_traces.push(etrace);
    }

    let total = main + config.aux_weight * aux;
    if !total.is_finite() {
        return Err(Error::non_finite("batch loss"));
    }
    let eval = BatchEval {
        main_loss: main,
        aux_loss: aux,
        total,
    };
    if !want_grads {
        return Ok((eval, None));
    }

    let mut model_grads = ModelGradients::zeros_like(model);
    let mut est_grads = EstimatorGradients::zeros_like(estimator);
    for (k, sample) in passes.iter().enumerate() {
        let (mean, std) = targets.intervals[k];
        let d_est = if config.aux_weight > 0.0 {
            config.aux_weight
                * calibration_grad(
                    estimates[k],
                    mean - std,
                    mean + std,
                    config.calibration_margin,
                )
                * inv_n
        } else {
            0.0
        };
        let tap_grads = if d_est != 0.0 {
            let (eg, taps) = estimator.backward(&est_traces[k], d_est);
            est_grads.add_assign(&eg);
            taps
        } else {
            Vec::new()
        };
        // the estimate reads activations averaged over the passes, so each
        // pass receives 1/passes of the tap gradient
        let inv_t = 1.0 / sample.traces.len() as f64;
        let scaled_taps: Vec<(usize, Vec<f64>)> = tap_grads
            .iter()
            .map(|(tap, g)| (*tap, g.iter().map(|v| v * inv_t).collect()))
            .collect();
        for trace in &sample.traces {
            let mut d_logits = cross_entropy_grad(&trace.logits, targets.labels[k])?;
            for g in &mut d_logits {
                *g *= inv_n * inv_t;
            }
            model_grads.add_assign(&backward(model, trace, &d_logits, &scaled_taps)?);
        }
    }
    Ok((eval, Some((model_grads, est_grads))))
}

/// One row of the training history.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    /// Mean main loss over the epoch's batches (epoch 0: evaluation pass).
    pub loss: f64,
    /// Mean auxiliary loss over the epoch's batches.
    pub aux_loss: f64,
    /// Held-out Spearman rank correlation between loss estimates and true
    /// losses.
    pub spearman: f64,
}

/// Per-epoch history of one [`joint_train`] run. Row 0 records the untrained
/// state.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainHistory {
    pub epochs: Vec<EpochStats>,
}

impl TrainHistory {
    pub fn final_spearman(&self) -> Option<f64> {
        self.epochs.last().map(|e| e.spearman)
    }

    pub fn write_csv(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        let mut writer = csv::Writer::from_path(path.as_ref())?;
        writer.write_record(["epoch", "loss", "aux_loss", "spearman"])?;
        for row in &self.epochs {
            writer.write_record([
                row.epoch.to_string(),
                row.loss.to_string(),
                row.aux_loss.to_string(),
                row.spearman.to_string(),
            ])?;
        }
        writer.flush()?;
        Ok(())
    }
}

/// Held-out Spearman between single-pass (dropout-inactive) loss estimates
/// and true cross-entropy losses.
pub fn heldout_spearman(
    model: &Mlp,
    estimator: &LossEstimator,
    dataset: &Dataset,
    indices: &[usize],
) -> Result<f64> {
    let mut truths = Vec::with_capacity(indices.len());
    let mut estimates = Vec::with_capacity(indices.len());
    for &i in indices {
        let trace = model.forward(dataset.sample(i))?;
        truths.push(cross_entropy(&trace.logits, dataset.label(i))?);
        estimates.push(estimator.estimate_from_trace(&trace)?);
    }
    Ok(spearman(&estimates, &truths))
}

/// Jointly train `model` and `estimator` on `dataset`.
///
/// A deterministic `val_fraction` split is held out for the per-epoch rank
/// metric (reproduce it with [`holdout_split`] and the same seed). Returns
/// the history; row 0 is the untrained evaluation.
pub fn joint_train(
    dataset: &Dataset,
    model: &mut Mlp,
    estimator: &mut LossEstimator,
    config: &JointTrainConfig,
) -> Result<TrainHistory> {
    config.validate()?;
    if dataset.num_features() != model.num_inputs() {
        return Err(Error::ShapeMismatch {
            what: "model input width",
            expected: dataset.num_features(),
            actual: model.num_inputs(),
        });
    }
    if dataset.num_classes() != model.num_classes() {
        return Err(Error::ShapeMismatch {
            what: "model class count",
            expected: dataset.num_classes(),
            actual: model.num_classes(),
        });
    }
    if !estimator.compatible_with(model) {
        return Err(Error::invalid_argument(
            "estimator taps do not match the model's hidden layers",
        ));
    }
    if dataset.num_samples() < 2 {
        return Err(Error::invalid_argument("dataset too small to train on"));
    }

    let (mut train_idx, val_idx) = holdout_split(
        dataset.num_samples(),
        config.val_fraction,
        derive(config.seed, Stream::HoldoutSplit),
    );
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(derive(config.seed, Stream::Shuffle));
    let mut mask_rng = ChaCha8Rng::seed_from_u64(derive(config.seed, Stream::Dropout));

    let mut adam_model = Adam::for_model(model, AdamConfig::with_lr(config.lr));
    let mut adam_est = Adam::for_estimator(estimator, AdamConfig::with_lr(config.lr));

    let mut history = TrainHistory::default();

    // epoch 0: evaluate the untrained state over the training rows
    {
        let mut main_sum = 0.0;
        let mut aux_sum = 0.0;
        for chunk in train_idx.chunks(config.batch_size) {
            let (inputs, labels) = gather(dataset, chunk);
            let refs: Vec<&[f64]> = inputs.iter().map(|x| x.as_slice()).collect();
            let mask_seed = mask_rng.next_u64();
            let targets = capture_targets(model, &refs, &labels, config, mask_seed)?;
            let eval = evaluate_batch(model, estimator, &refs, &targets, config)?;
            main_sum += eval.main_loss * chunk.len() as f64;
            aux_sum += eval.aux_loss * chunk.len() as f64;
        }
        let n = train_idx.len() as f64;
        history.epochs.push(EpochStats {
            epoch: 0,
            loss: main_sum / n,
            aux_loss: aux_sum / n,
            spearman: heldout_spearman(model, estimator, dataset, &val_idx)?,
        });
    }

    for epoch in 1..=config.epochs {
        train_idx.shuffle(&mut shuffle_rng);
        let mut main_sum = 0.0;
        let mut aux_sum = 0.0;
        for (step, chunk) in train_idx.chunks(config.batch_size).enumerate() {
            let abort = |e: Error| Error::TrainingAborted {
                epoch,
                step,
                reason: e.to_string(),
            };
            let (inputs, labels) = gather(dataset, chunk);
            let refs: Vec<&[f64]> = inputs.iter().map(|x| x.as_slice()).collect();
            let mask_seed = mask_rng.next_u64();
            let targets =
                capture_targets(model, &refs, &labels, config, mask_seed).map_err(abort)?;
            let (eval, model_grads, est_grads) =
                batch_gradients(model, estimator, &refs, &targets, config).map_err(abort)?;
            adam_model.step_model(model, &model_grads).map_err(abort)?;
            adam_est.step_estimator(estimator, &est_grads).map_err(abort)?;
            main_sum += eval.main_loss * chunk.len() as f64;
            aux_sum += eval.aux_loss * chunk.len() as f64;
        }
        let n = train_idx.len() as f64;
        history.epochs.push(EpochStats {
            epoch,
            loss: main_sum / n,
            aux_loss: aux_sum / n,
            spearman: heldout_spearman(model, estimator, dataset, &val_idx)?,
        });
    }

    Ok(history)
}

fn gather(dataset: &Dataset, indices: &[usize]) -> (Vec<Vec<f64>>, Vec<usize>) {
    let inputs = indices.iter().map(|&i| dataset.sample(i).to_vec()).collect();
    let labels = indices.iter().map(|&i| dataset.label(i)).collect();
    (inputs, labels)
}
