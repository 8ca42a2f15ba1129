//! Masking-based feature importance.
//!
//! A feature matters for a sample if excluding it makes the model worse:
//! each feature is masked in turn and the change in the (estimated or true)
//! loss is the feature's score. The masking strategy is pluggable and needs
//! no retraining; dropout stays off at explanation time so attributions are
//! deterministic.

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::estimator::network::LossEstimator;
use crate::nn::loss::cross_entropy;
use crate::nn::model::Mlp;

/// Rule producing the replacement value when feature `j` is masked out.
#[derive(Debug, Clone, PartialEq)]
pub enum MaskingStrategy {
    /// Replace with zero.
    Zero,
    /// Replace with a fixed constant.
    Constant(f64),
    /// Replace with the feature's mean over a reference dataset.
    FeatureMean(Vec<f64>),
}

impl MaskingStrategy {
    /// Feature-mean strategy from a reference dataset's column means.
    pub fn feature_mean_of(reference: &Dataset) -> Self {
        MaskingStrategy::FeatureMean(reference.column_means())
    }

    /// Replacement value for feature `j`.
    pub fn replacement(&self, j: usize, num_features: usize) -> Result<f64> {
        if j >= num_features {
            return Err(Error::IndexOutOfRange {
                index: j,
                len: num_features,
            });
        }
        match self {
            MaskingStrategy::Zero => Ok(0.0),
            MaskingStrategy::Constant(c) => Ok(*c),
            MaskingStrategy::FeatureMean(means) => {
                if means.len() != num_features {
                    return Err(Error::ShapeMismatch {
                        what: "feature means",
                        expected: num_features,
                        actual: means.len(),
                    });
                }
                Ok(means[j])
            }
        }
    }

    /// Stable identifier used in reports and manifests.
    pub fn id(&self) -> String {
        match self {
            MaskingStrategy::Zero => "zero".into(),
            MaskingStrategy::Constant(c) => format!("constant:{c}"),
            MaskingStrategy::FeatureMean(_) => "feature_mean".into(),
        }
    }
}

/// Copy of `x` with feature `j` replaced by the strategy's value.
pub fn mask_feature(x: &[f64], j: usize, strategy: &MaskingStrategy) -> Result<Vec<f64>> {
    let replacement = strategy.replacement(j, x.len())?;
    let mut masked = x.to_vec();
    masked[j] = replacement;
    Ok(masked)
}

/// Per-feature importance scores for one sample: the change in loss when
/// each feature is masked, and the induced ranking.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributionResult {
    pub sample_id: usize,
    /// Loss (estimate) on the unmasked sample.
    pub base_estimate: f64,
    /// `deltas[j] = masked_estimate(j) - base_estimate`.
    pub deltas: Vec<f64>,
    /// Feature indices sorted by delta descending; ties broken by ascending
    /// feature index.
    pub ranking: Vec<usize>,
}

impl AttributionResult {
    fn from_scores(sample_id: usize, base_estimate: f64, deltas: Vec<f64>) -> Self {
        let ranking = rank_by_delta(&deltas);
        AttributionResult {
            sample_id,
            base_estimate,
            deltas,
            ranking,
        }
    }
}

/// Indices `0..d` sorted by delta descending, ties by ascending index.
pub fn rank_by_delta(deltas: &[f64]) -> Vec<usize> {
    let mut ranking: Vec<usize> = (0..deltas.len()).collect();
    ranking.sort_by(|&a, &b| {
        deltas[b]
            .partial_cmp(&deltas[a])
            .expect("non-finite delta")
            .then(a.cmp(&b))
    });
    ranking
}

/// Importance scores from the loss estimator: one dropout-inactive forward
/// for the unmasked sample plus one per feature, no labels and no
/// retraining.
pub fn granger_scores(
    model: &Mlp,
    estimator: &LossEstimator,
    x: &[f64],
    strategy: &MaskingStrategy,
    sample_id: usize,
) -> Result<AttributionResult> {
    let base_trace = model.forward(x)?;
    let base = estimator.estimate_from_trace(&base_trace)?;
    let mut deltas = Vec::with_capacity(x.len());
    for j in 0..x.len() {
        let masked = mask_feature(x, j, strategy)?;
        let trace = model.forward(&masked)?;
        let estimate = estimator.estimate_from_trace(&trace)?;
        deltas.push(estimate - base);
    }
    Ok(AttributionResult::from_scores(sample_id, base, deltas))
}

/// Same pipeline but scored with the true loss (needs the label); serves as
/// the ground-truth ranking oracle.
pub fn oracle_granger_scores(
    model: &Mlp,
    x: &[f64],
    label: usize,
    strategy: &MaskingStrategy,
    sample_id: usize,
) -> Result<AttributionResult> {
    let base_trace = model.forward(x)?;
    let base = cross_entropy(&base_trace.logits, label)?;
    let mut deltas = Vec::with_capacity(x.len());
    for j in 0..x.len() {
        let masked = mask_feature(x, j, strategy)?;
        let trace = model.forward(&masked)?;
        deltas.push(cross_entropy(&trace.logits, label)? - base);
    }
    Ok(AttributionResult::from_scores(sample_id, base, deltas))
}

/// [`granger_scores`] over a batch; order-preserving, the first failing
/// sample aborts with its index.
pub fn explain_batch(
    model: &Mlp,
    estimator: &LossEstimator,
    samples: &[Vec<f64>],
    strategy: &MaskingStrategy,
) -> Result<Vec<AttributionResult>> {
    samples
        .iter()
        .enumerate()
        .map(|(i, x)| {
            granger_scores(model, estimator, x, strategy, i).map_err(|e| Error::SampleFailed {
                index: i,
                source: Box::new(e),
            })
        })
        .collect()
}

/// Write attribution results as CSV, one row per feature.
pub fn write_attributions_csv(
    results: &[AttributionResult],
    feature_names: &[String],
    strategy_id: &str,
    path: impl AsRef<std::path::Path>,
) -> Result<()> {
    let mut writer = csv::Writer::from_path(path.as_ref())?;
    writer.write_record(["sample_id", "feature", "feature_name", "delta", "rank", "strategy"])?;
    for result in results {
        // rank position of each feature under the stored ranking
        let mut position = vec![0usize; result.ranking.len()];
        for (pos, &feat) in result.ranking.iter().enumerate() {
            position[feat] = pos;
        }
        for (j, delta) in result.deltas.iter().enumerate() {
            writer.write_record([
                result.sample_id.to_string(),
                j.to_string(),
                feature_names.get(j).cloned().unwrap_or_default(),
                delta.to_string(),
                position[j].to_string(),
                strategy_id.to_string(),
            ])?;
        }
    }
    writer.flush()?;
    Ok(())
}
