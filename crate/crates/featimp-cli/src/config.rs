//! Training configuration file (TOML) and its resolution to full defaults.
//!
//! Every run echoes the fully-resolved configuration into its manifest, so a
//! config file plus a seed pins the entire run.

use std::path::Path;

use serde::{Deserialize, Serialize};

use featimp_core::estimator::{IndicatorMode, JointTrainConfig, Objective};

use crate::CliError;

/// On-disk training config; every field optional except the objective.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainFileConfig {
    pub objective: Objective,
    pub hidden_layers: Option<Vec<usize>>,
    pub margin: Option<f64>,
    pub calibration_margin: Option<f64>,
    pub aux_weight: Option<f64>,
    pub mc_passes: Option<usize>,
    pub lr: Option<f64>,
    pub batch_size: Option<usize>,
    pub epochs: Option<usize>,
    pub seed: Option<u64>,
    pub dropout_rate: Option<f64>,
    pub taps: Option<Vec<usize>>,
    pub estimator_units: Option<usize>,
    pub val_fraction: Option<f64>,
    pub indicator: Option<IndicatorMode>,
}

/// Fully-resolved training configuration (defaults expanded), as echoed to
/// the manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResolvedTrainConfig {
    pub objective: Objective,
    pub hidden_layers: Vec<usize>,
    pub margin: f64,
    pub calibration_margin: f64,
    pub aux_weight: f64,
    pub mc_passes: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub dropout_rate: f64,
    /// `None` means one tap per hidden layer.
    pub taps: Option<Vec<usize>>,
    pub estimator_units: usize,
    pub val_fraction: f64,
    pub indicator: IndicatorMode,
}

impl TrainFileConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            CliError::user(format!("cannot read config {}: {e}", path.display()))
        })?;
        toml::from_str(&text)
            .map_err(|e| CliError::user(format!("bad config {}: {e}", path.display())))
    }

    /// Expand defaults; `seed_override` (the `--seed` flag) wins over the
    /// file's seed.
    pub fn resolve(&self, seed_override: Option<u64>) -> ResolvedTrainConfig {
        // dropout is only on by default when the calibration objective
        // needs stochastic passes
        let default_dropout = match self.objective {
            Objective::DropoutCalibration => 0.1,
            Objective::Contrastive => 0.0,
        };
        ResolvedTrainConfig {
            objective: self.objective,
            hidden_layers: self
                .hidden_layers
                .clone()
                .unwrap_or_else(|| vec![64, 64, 32, 16]),
            margin: self.margin.unwrap_or(1.0),
            calibration_margin: self.calibration_margin.unwrap_or(0.0),
            aux_weight: self.aux_weight.unwrap_or(1.0),
            mc_passes: self.mc_passes.unwrap_or(10),
            lr: self.lr.unwrap_or(0.001),
            batch_size: self.batch_size.unwrap_or(128),
            epochs: self.epochs.unwrap_or(40),
            seed: seed_override.or(self.seed).unwrap_or(0),
            dropout_rate: self.dropout_rate.unwrap_or(default_dropout),
            taps: self.taps.clone(),
            estimator_units: self
                .estimator_units
                .unwrap_or(featimp_core::estimator::DEFAULT_ESTIMATOR_UNITS),
            val_fraction: self.val_fraction.unwrap_or(0.1),
            indicator: self.indicator.unwrap_or(IndicatorMode::Signed),
        }
    }
}

impl ResolvedTrainConfig {
    pub fn joint_train_config(&self) -> JointTrainConfig {
        JointTrainConfig {
            objective: self.objective,
            margin: self.margin,
            calibration_margin: self.calibration_margin,
            aux_weight: self.aux_weight,
            mc_passes: self.mc_passes,
            lr: self.lr,
            batch_size: self.batch_size,
            epochs: self.epochs,
            seed: self.seed,
            val_fraction: self.val_fraction,
            indicator: self.indicator,
        }
    }
}
