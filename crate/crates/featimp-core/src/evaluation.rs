//! Fidelity measurement for feature rankings.
//!
//! The headline metric is the delta-log-odds of top-k% masking: mask the k%
//! highest-ranked features of a sample and measure how much the model's
//! confidence in its original prediction drops. Higher means the ranking
//! found features the model actually relies on.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::attribution::MaskingStrategy;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::estimator::network::LossEstimator;
use crate::nn::loss::softmax;
use crate::nn::model::Mlp;
use crate::seeds::{derive, Stream};
use crate::stats::percentile;

/// Probabilities are clamped to `[CLAMP, 1 - CLAMP]` before the log-odds so
/// saturated softmax outputs stay finite.
pub const PROBABILITY_CLAMP: f64 = 1e-7;

fn log_odds(p: f64) -> f64 {
    let p = p.clamp(PROBABILITY_CLAMP, 1.0 - PROBABILITY_CLAMP);
    (p / (1.0 - p)).ln()
}

/// Number of features masked at `k_percent`: `ceil(k * d / 100)`.
pub fn masked_feature_count(num_features: usize, k_percent: f64) -> usize {
    (k_percent * num_features as f64 / 100.0).ceil() as usize
}

fn validate_ranking(ranking: &[usize], num_features: usize) -> Result<()> {
    if ranking.len() != num_features {
        return Err(Error::InvalidRanking(format!(
            "ranking has {} entries for {} features",
            ranking.len(),
            num_features
        )));
    }
    let mut seen = vec![false; num_features];
    for &f in ranking {
        if f >= num_features || seen[f] {
            return Err(Error::InvalidRanking(format!(
                "ranking is not a permutation (feature {f})"
            )));
        }
        seen[f] = true;
    }
    Ok(())
}

/// Delta-log-odds of masking the top `k_percent` ranked features of `x`.
///
/// The reference class is the model's argmax on the unmasked input, so no
/// label is needed. With `k_percent = 0` the score is exactly zero.
pub fn delta_log_odds(
    model: &Mlp,
    x: &[f64],
    ranking: &[usize],
    k_percent: f64,
    strategy: &MaskingStrategy,
) -> Result<f64> {
    if !(0.0..=100.0).contains(&k_percent) {
        return Err(Error::invalid_argument("k percent must be in [0, 100]"));
    }
    validate_ranking(ranking, x.len())?;

    let probs = softmax(&model.forward(x)?.logits);
    let reference_class = argmax(&probs);
    let p_ref = probs[reference_class];

    let count = masked_feature_count(x.len(), k_percent);
    if count == 0 {
        return Ok(0.0);
    }
    let mut masked = x.to_vec();
    for &j in &ranking[..count] {
        masked[j] = strategy.replacement(j, x.len())?;
    }
    let masked_probs = softmax(&model.forward(&masked)?.logits);
    let p_masked = masked_probs[reference_class];

    Ok(log_odds(p_ref) - log_odds(p_masked))
}

fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// One sample's fidelity score.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleScore {
    pub sample_id: usize,
    pub delta_log_odds: f64,
}

/// Fidelity of one explainer on one dataset at one masking level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub explainer: String,
    pub strategy: String,
    pub k_percent: f64,
    pub median: f64,
    pub p25: f64,
    pub p75: f64,
    pub per_sample: Vec<SampleScore>,
}

impl EvalReport {
    pub fn scores(&self) -> Vec<f64> {
        self.per_sample.iter().map(|s| s.delta_log_odds).collect()
    }

    pub fn write_csv(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        let mut writer = csv::Writer::from_path(path.as_ref())?;
        writer.write_record(["sample_id", "delta_log_odds"])?;
        for s in &self.per_sample {
            writer.write_record([s.sample_id.to_string(), s.delta_log_odds.to_string()])?;
        }
        writer.flush()?;
        Ok(())
    }
}

/// Evaluate an explainer (any `sample -> ranking` function) over a dataset.
/// Percentiles use linear interpolation between order statistics.
pub fn evaluate_explainer<F>(
    model: &Mlp,
    explainer_id: &str,
    mut explain: F,
    dataset: &Dataset,
    k_percent: f64,
    strategy: &MaskingStrategy,
) -> Result<EvalReport>
where
    F: FnMut(usize, &[f64]) -> Result<Vec<usize>>,
{
    if dataset.num_samples() == 0 {
        return Err(Error::invalid_argument("cannot evaluate an empty dataset"));
    }
    let mut per_sample = Vec::with_capacity(dataset.num_samples());
    for i in 0..dataset.num_samples() {
        let x = dataset.sample(i);
        let score = (|| -> Result<f64> {
            let ranking = explain(i, x)?;
            delta_log_odds(model, x, &ranking, k_percent, strategy)
        })()
        .map_err(|e| Error::SampleFailed {
            index: i,
            source: Box::new(e),
        })?;
        per_sample.push(SampleScore {
            sample_id: i,
            delta_log_odds: score,
        });
    }
    let scores: Vec<f64> = per_sample.iter().map(|s| s.delta_log_odds).collect();
    Ok(EvalReport {
        explainer: explainer_id.into(),
        strategy: strategy.id(),
        k_percent,
        median: percentile(&scores, 50.0),
        p25: percentile(&scores, 25.0),
        p75: percentile(&scores, 75.0),
        per_sample,
    })
}

/// Uniformly random feature ranking; the control every explainer has to
/// beat.
pub fn random_ranking_baseline(num_features: usize, seed: u64) -> Result<Vec<usize>> {
    if num_features == 0 {
        return Err(Error::invalid_argument("ranking needs at least 1 feature"));
    }
    let mut ranking: Vec<usize> = (0..num_features).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ranking.shuffle(&mut rng);
    Ok(ranking)
}

/// Mean loss estimate over the dataset at increasing levels of additive
/// Gaussian input noise. `noise_levels` must be sorted ascending and start
/// at zero; the zero level is evaluated on the clean inputs exactly.
pub fn severity_sweep(
    model: &Mlp,
    estimator: &LossEstimator,
    dataset: &Dataset,
    noise_levels: &[f64],
    seed: u64,
) -> Result<Vec<(f64, f64)>> {
    if noise_levels.is_empty() {
        return Err(Error::invalid_argument("severity sweep needs noise levels"));
    }
    if noise_levels[0] != 0.0 {
        return Err(Error::invalid_argument("first noise level must be 0"));
    }
    for pair in noise_levels.windows(2) {
        if pair[0] > pair[1] {
            return Err(Error::invalid_argument("noise levels must be ascending"));
        }
    }
    if noise_levels.iter().any(|&s| s < 0.0 || !s.is_finite()) {
        return Err(Error::invalid_argument("noise levels must be finite and >= 0"));
    }
    if dataset.num_samples() == 0 {
        return Err(Error::invalid_argument("cannot sweep an empty dataset"));
    }

    let mut curve = Vec::with_capacity(noise_levels.len());
    for (level_idx, &sigma) in noise_levels.iter().enumerate() {
        let mut rng =
            ChaCha8Rng::seed_from_u64(derive(seed, Stream::NoiseLevel(level_idx as u64)));
        let normal = Normal::new(0.0, 1.0).expect("unit normal");
        let mut sum = 0.0;
        for i in 0..dataset.num_samples() {
            let x = dataset.sample(i);
            let estimate = if sigma == 0.0 {
                estimator.estimate_from_trace(&model.forward(x)?)?
            } else {
                let noisy: Vec<f64> = x
                    .iter()
                    .map(|&v| v + sigma * normal.sample(&mut rng))
                    .collect();
                estimator.estimate_from_trace(&model.forward(&noisy)?)?
            };
            sum += estimate;
        }
        curve.push((sigma, sum / dataset.num_samples() as f64));
    }
    Ok(curve)
}

/// Write severity-sweep points as CSV.
pub fn write_sweep_csv(curve: &[(f64, f64)], path: impl AsRef<std::path::Path>) -> Result<()> {
    let mut writer = csv::Writer::from_path(path.as_ref())?;
    writer.write_record(["noise_sigma", "mean_estimate"])?;
    for (sigma, mean) in curve {
        writer.write_record([sigma.to_string(), mean.to_string()])?;
    }
    writer.flush()?;
    Ok(())
}
